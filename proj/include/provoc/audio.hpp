#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "provoc/common.hpp"

namespace provoc {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 24000;

  size_t size() const { return samples.size(); }
  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace wav_detail {

struct ChunkHeader {
  char id[4];
  uint32_t size;
};

inline bool id_is(const char* id, const char* want) { return std::memcmp(id, want, 4) == 0; }

}  // namespace wav_detail

// Reads RIFF/WAVE, linear PCM (16-bit) or IEEE float (32-bit). Multi-channel
// input is mixed down to mono by averaging. 16-bit samples map to value/32768.
inline Waveform load_wav(const std::string& path) {
  using namespace wav_detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot read audio file: ", path);

  char riff[4], wave[4];
  is.read(riff, 4);
  uint32_t riff_size = 0;
  is.read(reinterpret_cast<char*>(&riff_size), 4);
  is.read(wave, 4);
  if (!is || !id_is(riff, "RIFF") || !id_is(wave, "WAVE"))
    fail("not a RIFF/WAVE file: ", path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false, have_data = false;
  std::vector<char> data;

  while (is) {
    ChunkHeader ch{};
    is.read(ch.id, 4);
    is.read(reinterpret_cast<char*>(&ch.size), 4);
    if (!is) break;
    if (id_is(ch.id, "fmt ")) {
      std::vector<char> fmt(ch.size);
      is.read(fmt.data(), ch.size);
      if (ch.size < 16) fail("malformed fmt chunk in ", path);
      std::memcpy(&format, fmt.data() + 0, 2);
      std::memcpy(&channels, fmt.data() + 2, 2);
      std::memcpy(&rate, fmt.data() + 4, 4);
      std::memcpy(&bits, fmt.data() + 14, 2);
      have_fmt = true;
    } else if (id_is(ch.id, "data")) {
      data.resize(ch.size);
      is.read(data.data(), ch.size);
      have_data = true;
    } else {
      is.seekg(ch.size + (ch.size & 1), std::ios::cur);
      continue;
    }
    if (ch.size & 1) is.seekg(1, std::ios::cur);
  }
  if (!have_fmt) fail("missing fmt chunk in ", path);
  if (!have_data) fail("missing data chunk in ", path);
  if (channels == 0) fail("zero channels in ", path);

  const uint16_t WAVE_PCM = 1, WAVE_FLOAT = 3;
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == WAVE_PCM && bits == 16) {
    size_t n = data.size() / 2 / channels;
    w.samples.resize(n);
    const int16_t* p = reinterpret_cast<const int16_t*>(data.data());
    for (size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (uint16_t c = 0; c < channels; ++c) acc += p[i * channels + c] / 32768.0;
      w.samples[i] = acc / channels;
    }
  } else if (format == WAVE_FLOAT && bits == 32) {
    size_t n = data.size() / 4 / channels;
    w.samples.resize(n);
    const float* p = reinterpret_cast<const float*>(data.data());
    for (size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (uint16_t c = 0; c < channels; ++c) acc += p[i * channels + c];
      w.samples[i] = acc / channels;
    }
  } else {
    fail("unsupported WAV encoding in ", path, " (format ", format, ", ", bits,
         " bits); expected 16-bit PCM or 32-bit float");
  }
  for (double s : w.samples)
    if (!std::isfinite(s)) fail("non-finite sample in ", path);
  return w;
}

// Writes mono 16-bit PCM. Samples are clipped to [-1, 1].
inline void save_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot write audio file: ", path);
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  const uint32_t rate = static_cast<uint32_t>(w.sample_rate);

  os.write("RIFF", 4);
  write_pod<uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_pod<uint32_t>(os, 16);
  write_pod<uint16_t>(os, 1);   // PCM
  write_pod<uint16_t>(os, 1);   // mono
  write_pod<uint32_t>(os, rate);
  write_pod<uint32_t>(os, rate * 2);
  write_pod<uint16_t>(os, 2);
  write_pod<uint16_t>(os, 16);
  os.write("data", 4);
  write_pod<uint32_t>(os, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    double s = std::clamp(w.samples[i], -1.0, 1.0);
    double v = s * 32768.0;
    v = std::clamp(v, -32768.0, 32767.0);
    write_pod<int16_t>(os, static_cast<int16_t>(std::lrint(v)));
  }
}

// Windowed-sinc resampler (Hann window, 32 taps per side).
inline Waveform resample(const Waveform& in, int target_rate) {
  check(target_rate > 0, "target sample rate must be positive");
  if (in.sample_rate == target_rate || in.samples.empty()) {
    Waveform out = in;
    out.sample_rate = target_rate;
    return out;
  }
  const double pi = 3.14159265358979323846;
  const double ratio = static_cast<double>(in.sample_rate) / target_rate;
  const double cutoff = std::min(1.0, 1.0 / ratio);  // anti-alias when downsampling
  const int taps = 32;
  const size_t out_n =
      static_cast<size_t>(std::floor(static_cast<double>(in.samples.size() - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_n);
  for (size_t i = 0; i < out_n; ++i) {
    const double pos = i * ratio;
    const long center = static_cast<long>(std::floor(pos));
    double acc = 0.0;
    for (long k = center - taps + 1; k <= center + taps; ++k) {
      if (k < 0 || k >= static_cast<long>(in.samples.size())) continue;
      const double d = pos - k;
      double s;
      if (std::abs(d) < 1e-12) {
        s = cutoff;
      } else {
        s = std::sin(pi * cutoff * d) / (pi * d);
      }
      const double win = 0.5 * (1.0 + std::cos(pi * d / taps));
      acc += in.samples[k] * s * win;
    }
    out.samples[i] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

// Loads a WAV file and resamples to target_rate when needed.
inline Waveform load_waveform(const std::string& path, int target_rate) {
  Waveform w = load_wav(path);
  check(w.sample_rate > 0, "invalid sample rate in ", path);
  if (w.sample_rate != target_rate) w = resample(w, target_rate);
  return w;
}

}  // namespace provoc
