#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "provoc/audio.hpp"
#include "provoc/common.hpp"
#include "provoc/features.hpp"
#include "provoc/text.hpp"

namespace provoc {

struct ManifestEntry {
  std::string id;
  std::string audio;  // path, relative entries resolved against the manifest
  std::string transcript;
  std::string speaker;
};

struct Utterance {
  std::string id;
  std::string speaker;
  std::string transcript;        // normalized text
  std::vector<int> tokens;       // with trailing EOS
  std::vector<double> mel;       // frames x n_mels, row-major
  int frames = 0;
};

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open manifest ", path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "manifest ", path, " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  check(line == "id,audio,transcript,speaker", "manifest ", path,
        " must start with header 'id,audio,transcript,speaker', got '", line, "'");
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = csv_split(line);
    check(fields.size() == 4, "manifest ", path, " line ", line_no, ": expected 4 fields, got ",
          fields.size());
    ManifestEntry e{fields[0], fields[1], fields[2], fields[3]};
    check(!e.id.empty() && !e.audio.empty() && !e.speaker.empty(), "manifest ", path, " line ",
          line_no, ": id, audio and speaker must be nonempty");
    check(seen.insert(e.id).second, "manifest ", path, ": duplicate utterance id ", e.id);
    if (std::filesystem::path(e.audio).is_relative()) e.audio = (base / e.audio).string();
    entries.push_back(std::move(e));
  }
  check(!entries.empty(), "manifest ", path, " has no entries");
  return entries;
}

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::string out = "id,audio,transcript,speaker\n";
  for (const auto& e : entries)
    out += csv_escape(e.id) + "," + csv_escape(e.audio) + "," + csv_escape(e.transcript) + "," +
           csv_escape(e.speaker) + "\n";
  write_text_file(path, out);
}

inline Utterance load_utterance(const ManifestEntry& e, const FeatureConfig& cfg) {
  Utterance u;
  u.id = e.id;
  u.speaker = e.speaker;
  u.transcript = normalize_text(e.transcript);
  check(!u.transcript.empty(), "utterance ", e.id, " has an empty transcript");
  u.tokens = tokenize(u.transcript).tokens;
  auto wav = load_waveform(e.audio, cfg.sample_rate);
  auto mel = mel_spectrogram(wav, cfg);
  u.mel = std::move(mel.data);
  u.frames = mel.frames;
  return u;
}

inline std::vector<Utterance> load_dataset(const std::string& manifest_path,
                                           const FeatureConfig& cfg) {
  std::vector<Utterance> out;
  for (const auto& e : read_manifest(manifest_path)) out.push_back(load_utterance(e, cfg));
  return out;
}

inline std::vector<std::string> dataset_speakers(const std::vector<Utterance>& data) {
  std::set<std::string> s;
  for (const auto& u : data) s.insert(u.speaker);
  return {s.begin(), s.end()};
}

// ---- synthetic corpus ----
// Formant-like tones: each character maps to a fixed pair of resonant
// frequencies, speakers differ in fundamental, and each utterance carries a
// speaker-independent pitch factor standing in for prosody.

namespace corpus_detail {

inline const std::vector<std::string>& word_list() {
  static const std::vector<std::string> words = {"go", "red", "cat", "sun", "map",  "tea",
                                                 "pod", "sky", "ice", "fog", "oak", "gem"};
  return words;
}

inline void render_char(std::vector<double>& out, char c, double f0, int sample_rate,
                        double seconds) {
  const int n = static_cast<int>(seconds * sample_rate);
  if (c == ' ') {
    out.insert(out.end(), n, 0.0);
    return;
  }
  const uint64_t h = fnv1a(&c, 1);
  const double f1 = 300.0 + static_cast<double>(h % 700);
  const double f2 = 900.0 + static_cast<double>((h >> 16) % 1600);
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double env = 0.5 * (1.0 - std::cos(two_pi * i / std::max(1, n - 1)));  // Hann
    const double s = 0.5 * std::sin(two_pi * f0 * t) + 0.3 * std::sin(two_pi * f1 * t) +
                     0.2 * std::sin(two_pi * f2 * t);
    out.push_back(0.4 * env * s);
  }
}

}  // namespace corpus_detail

inline Waveform synth_utterance_audio(const std::string& text, double f0, int sample_rate) {
  Waveform w;
  w.sample_rate = sample_rate;
  for (char c : text) {
    const uint64_t h = fnv1a(&c, 1);
    const double seconds = 0.050 + 0.001 * static_cast<double>(h % 11);  // 50-60 ms
    corpus_detail::render_char(w.samples, c, f0, sample_rate, seconds);
  }
  return w;
}

// Writes wav files plus manifest.csv under dir; returns the manifest path.
inline std::string make_synthetic_corpus(const std::string& dir, int n_speakers,
                                         int utterances_per_speaker, int sample_rate,
                                         uint64_t seed) {
  check(n_speakers >= 1, "corpus needs at least one speaker");
  check(utterances_per_speaker >= 1, "corpus needs at least one utterance per speaker");
  std::filesystem::create_directories(dir);
  const auto& words = corpus_detail::word_list();
  std::vector<ManifestEntry> entries;
  for (int s = 0; s < n_speakers; ++s) {
    const std::string speaker = "spk" + std::to_string(s);
    const double base_f0 = 110.0 + 35.0 * s;
    for (int u = 0; u < utterances_per_speaker; ++u) {
      Rng rng(mix64(seed ^ (static_cast<uint64_t>(s) << 32) ^ static_cast<uint64_t>(u)));
      const std::string text = words[rng.below(words.size())] + " " + words[rng.below(words.size())];
      // per-utterance pitch factor: the prosodic content, independent of speaker
      const double factor = 0.9 + 0.25 * rng.uniform();
      const std::string id = speaker + "_u" + std::to_string(u);
      const std::string wav_name = id + ".wav";
      save_wav((std::filesystem::path(dir) / wav_name).string(),
               synth_utterance_audio(text, base_f0 * factor, sample_rate));
      entries.push_back({id, wav_name, text, speaker});
    }
  }
  const std::string manifest = (std::filesystem::path(dir) / "manifest.csv").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace provoc
