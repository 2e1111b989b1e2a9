#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "provoc/audio.hpp"
#include "provoc/features.hpp"
#include "provoc/fft.hpp"
#include "provoc/text.hpp"

using namespace provoc;

namespace {

const double kPi = 3.14159265358979323846;

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "provoc_feat_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("rfft matches a naive DFT") {
  Rng rng(5);
  const size_t n = 64;
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  auto spec = rfft(x, n);
  REQUIRE(spec.size() == n / 2 + 1);
  for (size_t k = 0; k <= n / 2; ++k) {
    cplx acc = 0.0;
    for (size_t t = 0; t < n; ++t)
      acc += x[t] * std::exp(cplx(0.0, -2.0 * kPi * static_cast<double>(k * t) / n));
    CHECK(std::abs(spec[k] - acc) < 1e-9);
  }
}

TEST_CASE("irfft inverts rfft") {
  Rng rng(7);
  const size_t n = 128;
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  auto back = irfft(rfft(x, n), n);
  REQUIRE(back.size() == n);
  for (size_t i = 0; i < n; ++i) CHECK(back[i] == Catch::Approx(x[i]).margin(1e-10));
}

TEST_CASE("rfft of a pure tone peaks at its bin") {
  const size_t n = 256;
  std::vector<double> x(n);
  const int bin = 12;
  for (size_t t = 0; t < n; ++t) x[t] = std::sin(2.0 * kPi * bin * t / n);
  auto spec = rfft(x, n);
  for (size_t k = 0; k <= n / 2; ++k) {
    if (k == bin) CHECK(std::abs(spec[k]) == Catch::Approx(n / 2.0).epsilon(1e-9));
    else CHECK(std::abs(spec[k]) < 1e-8);
  }
}

TEST_CASE("wav io round trip at 16 bits") {
  Waveform w;
  w.sample_rate = 24000;
  w.samples.resize(2400);
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.7 * std::sin(2.0 * kPi * 220.0 * i / 24000.0);
  const std::string path = temp_path("roundtrip.wav");
  save_wav(path, w);
  auto r = load_wav(path);
  CHECK(r.sample_rate == 24000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < r.samples.size(); ++i)
    CHECK(r.samples[i] == Catch::Approx(w.samples[i]).margin(1.0 / 32768.0 + 1e-9));
}

TEST_CASE("load_wav rejects junk") {
  const std::string path = temp_path("junk.wav");
  write_text_file(path, "this is not audio");
  CHECK_THROWS_AS(load_wav(path), Error);
  CHECK_THROWS_AS(load_wav(temp_path("missing_file.wav")), Error);
}

TEST_CASE("resample preserves a tone and changes length") {
  Waveform w;
  w.sample_rate = 48000;
  w.samples.resize(4800);
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.5 * std::sin(2.0 * kPi * 440.0 * i / 48000.0);
  auto r = resample(w, 24000);
  CHECK(r.sample_rate == 24000);
  CHECK(std::abs(static_cast<double>(r.samples.size()) - 2400.0) < 3.0);
  // the mid section should still be a 440 Hz tone of similar amplitude
  double peak = 0.0;
  for (size_t i = 500; i < 1900; ++i) peak = std::max(peak, std::abs(r.samples[i]));
  CHECK(peak == Catch::Approx(0.5).margin(0.05));
  // no-op when rates match
  auto same = resample(w, 48000);
  CHECK(same.samples == w.samples);
}

TEST_CASE("stft frame count follows 1 + len / hop") {
  FeatureConfig cfg;
  CHECK(stft_frame_count(24000, cfg) == 1 + 24000 / 300);
  CHECK(stft_frame_count(1200, cfg) == 5);
  CHECK(stft_frame_count(1499, cfg) == 5);
  CHECK(stft_frame_count(1500, cfg) == 6);
  Waveform w;
  w.sample_rate = 24000;
  w.samples.assign(6000, 0.1);
  CHECK(static_cast<int>(stft(w, cfg).size()) == 1 + 6000 / 300);
}

TEST_CASE("stft rejects sub-window input") {
  FeatureConfig cfg;
  Waveform w;
  w.sample_rate = 24000;
  w.samples.assign(cfg.win_length - 1, 0.0);
  CHECK_THROWS_AS(stft(w, cfg), Error);
}

TEST_CASE("istft reconstructs the interior of the signal") {
  FeatureConfig cfg;
  Waveform w;
  w.sample_rate = 24000;
  w.samples.resize(9600);
  Rng rng(11);
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.4 * std::sin(2.0 * kPi * 330.0 * i / 24000.0) + 0.05 * rng.normal();
  auto frames = stft(w, cfg);
  auto rec = istft(frames, cfg);
  REQUIRE(rec.samples.size() == (frames.size() - 1) * static_cast<size_t>(cfg.hop_length));
  // skip one window at each edge where overlap-add is partial
  double err = 0.0;
  int count = 0;
  for (size_t i = cfg.win_length; i + cfg.win_length < rec.samples.size(); ++i) {
    err += std::abs(rec.samples[i] - w.samples[i]);
    ++count;
  }
  REQUIRE(count > 0);
  CHECK(err / count < 1e-6);
}

TEST_CASE("mel filterbank has unit peaks at band centers") {
  FeatureConfig cfg;
  MelFilterbank fb(cfg);
  CHECK(fb.bins() == cfg.n_fft / 2 + 1);
  // centers are evenly spaced on the mel scale between fmin and fmax
  const double mel_lo = hz_to_mel(cfg.fmin), mel_hi = hz_to_mel(cfg.fmax);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double expect = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
    CHECK(fb.center_frequency(m) == Catch::Approx(expect).epsilon(1e-9));
  }
  // a frame with energy at one center frequency lights that band the most;
  // weight at the exact center bin approaches 1 as the grid allows
  for (int m : {10, 40, 70}) {
    const double fc = fb.center_frequency(m);
    double best = 0.0;
    for (int b = 0; b < fb.bins(); ++b) best = std::max(best, fb.weight(m, b));
    CHECK(best > 0.5);
    // triangle is zero outside its neighbors' centers
    const double lo = fb.center_frequency(m - 1), hi = fb.center_frequency(m + 1) ;
    for (int b = 0; b < fb.bins(); ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      if (f < lo - 1e-9 || f > hi + 1e-9) CHECK(fb.weight(m, b) == 0.0);
    }
    (void)fc;
  }
}

TEST_CASE("hz mel conversions invert each other") {
  for (double hz : {80.0, 500.0, 1000.0, 7600.0})
    CHECK(mel_to_hz(hz_to_mel(hz)) == Catch::Approx(hz).epsilon(1e-12));
}

TEST_CASE("mel spectrogram applies the log floor") {
  FeatureConfig cfg;
  Waveform w;
  w.sample_rate = 24000;
  w.samples.assign(3000, 0.0);  // silence
  auto mel = mel_spectrogram(w, cfg);
  CHECK(mel.frames == 1 + 3000 / 300);
  CHECK(mel.n_mels == 80);
  const double floor_log = std::log(cfg.log_floor);
  for (double v : mel.data) CHECK(v == floor_log);
}

TEST_CASE("tone concentrates energy in the matching mel band") {
  FeatureConfig cfg;
  Waveform w;
  w.sample_rate = 24000;
  w.samples.resize(6000);
  const double tone = 1000.0;
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.8 * std::sin(2.0 * kPi * tone * i / 24000.0);
  auto mel = mel_spectrogram(w, cfg);
  MelFilterbank fb(cfg);
  // find the band whose center is nearest the tone
  int want = 0;
  for (int m = 1; m < cfg.n_mels; ++m)
    if (std::abs(fb.center_frequency(m) - tone) < std::abs(fb.center_frequency(want) - tone))
      want = m;
  const int t = mel.frames / 2;
  int best = 0;
  for (int m = 1; m < cfg.n_mels; ++m)
    if (mel.at(t, m) > mel.at(t, best)) best = m;
  CHECK(std::abs(best - want) <= 1);
}

TEST_CASE("mel container round trips through disk") {
  MelSpectrogram mel;
  mel.frames = 7;
  mel.n_mels = 5;
  mel.sample_rate = 24000;
  mel.hop_length = 300;
  mel.win_length = 1200;
  mel.data.resize(35);
  Rng rng(13);
  for (auto& v : mel.data) v = rng.normal();
  const std::string path = temp_path("container.mel");
  save_mel(path, mel);
  auto r = load_mel(path);
  CHECK(r.frames == 7);
  CHECK(r.n_mels == 5);
  CHECK(r.sample_rate == 24000);
  CHECK(r.hop_length == 300);
  CHECK(r.win_length == 1200);
  REQUIRE(r.data.size() == mel.data.size());
  for (size_t i = 0; i < r.data.size(); ++i)
    CHECK(r.data[i] == Catch::Approx(mel.data[i]).margin(1e-6));  // f32 storage
  write_text_file(temp_path("bad.mel"), "PROVOCXX garbage");
  CHECK_THROWS_AS(load_mel(temp_path("bad.mel")), Error);
}

TEST_CASE("feature config validation rejects bad values") {
  FeatureConfig cfg;
  cfg.n_fft = 1000;  // not a power of two
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = FeatureConfig{};
  cfg.win_length = cfg.n_fft + 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = FeatureConfig{};
  cfg.fmax = cfg.sample_rate;  // beyond nyquist
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("vocabulary covers the documented table") {
  const Vocabulary& v = vocabulary();
  CHECK(v.size() == 48);
  CHECK(Vocabulary::kPad == 0);
  CHECK(Vocabulary::kBos == 1);
  CHECK(Vocabulary::kEos == 2);
  CHECK(v.id(' ') == 3);
  CHECK(v.id('\'') == 4);
  CHECK(v.id('-') == 5);
  CHECK(v.id('.') == 6);
  CHECK(v.id(',') == 7);
  CHECK(v.id('?') == 8);
  CHECK(v.id('!') == 9);
  CHECK(v.id(':') == 10);
  CHECK(v.id(';') == 11);
  CHECK(v.id('0') == 12);
  CHECK(v.id('9') == 21);
  CHECK(v.id('a') == 22);
  CHECK(v.id('z') == 47);
  CHECK(v.character(22) == 'a');
  CHECK_FALSE(v.contains('@'));
  CHECK_THROWS_AS(v.id('@'), Error);
}

TEST_CASE("normalize_text lowercases and collapses whitespace") {
  CHECK(normalize_text("  Hello   WORLD ") == "hello world");
  CHECK(normalize_text("a\tb\nc") == "a b c");
  CHECK(normalize_text("") == "");
  CHECK(normalize_text("  \t ") == "");
}

TEST_CASE("tokenize appends EOS and round trips") {
  auto seq = tokenize("Go now!");
  REQUIRE(seq.tokens.size() == 8);  // "go now!" + EOS
  CHECK(seq.tokens.back() == Vocabulary::kEos);
  CHECK(seq.tokens[0] == vocabulary().id('g'));
  CHECK(detokenize(seq) == "go now!");
  CHECK_THROWS_AS(tokenize("   "), Error);
  CHECK_THROWS_AS(tokenize("caf\xC3\xA9"), Error);  // outside vocabulary
}
