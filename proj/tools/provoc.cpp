#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "provoc/audio.hpp"
#include "provoc/config.hpp"
#include "provoc/dataset.hpp"
#include "provoc/eval.hpp"
#include "provoc/features.hpp"
#include "provoc/pipeline.hpp"
#include "provoc/plot.hpp"
#include "provoc/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace provoc;

struct Globals {
  std::string config_path, checkpoint_path;
  int64_t seed = -1;
  bool deterministic = false;
  bool dump_config = false;
};

Config resolve_config(const Globals& g) {
  Config cfg = g.config_path.empty() ? desk_config() : load_config(g.config_path);
  if (g.seed >= 0) cfg.training.seed = static_cast<uint64_t>(g.seed);
  return cfg;
}

// Resumed runs keep model and feature sections from the checkpoint; training
// and pipeline settings follow the command-line config when one is given.
void overlay_runtime(Checkpoint& ck, const Globals& g) {
  if (!g.config_path.empty()) {
    Config cli_cfg = load_config(g.config_path);
    ck.config.training = cli_cfg.training;
    ck.config.pipeline = cli_cfg.pipeline;
  }
  if (g.seed >= 0) ck.config.training.seed = static_cast<uint64_t>(g.seed);
}

std::string require(const std::string& value, const char* what) {
  check(!value.empty(), what);
  return value;
}

std::vector<std::pair<std::string, std::string>> read_transcript_table(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  check(!lines.empty(), "transcript file ", path, " is empty");
  const auto header = csv_split(lines[0]);
  int id_col = -1, text_col = -1;
  if (header.size() == 2 && header[0] == "id" && header[1] == "transcript") {
    id_col = 0;
    text_col = 1;
  } else if (header.size() == 4 && header[0] == "id" && header[2] == "transcript") {
    id_col = 0;
    text_col = 2;
  } else {
    fail("transcript file ", path, " must start with 'id,transcript' or a manifest header");
  }
  std::vector<std::pair<std::string, std::string>> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv_split(lines[i]);
    check(f.size() == header.size(), "transcript file ", path, " line ", i + 1, " has ",
          f.size(), " fields");
    rows.emplace_back(f[id_col], f[text_col]);
  }
  return rows;
}

struct TrainArgs {
  std::string data, out, log;
};

int cmd_pretrain(const Globals& g, const TrainArgs& a) {
  require(a.data, "pretrain requires --data with a manifest path");
  require(a.out, "pretrain requires --out with a checkpoint path");
  std::unique_ptr<Trainer> tr;
  std::vector<Utterance> data;
  if (!g.checkpoint_path.empty()) {
    Checkpoint ck = load_checkpoint(g.checkpoint_path);
    check(ck.stage == "pretrain", "cannot resume pretraining from a ", ck.stage, " checkpoint");
    overlay_runtime(ck, g);
    data = load_dataset(a.data, ck.config.features);
    tr = std::make_unique<Trainer>(ck);
  } else {
    const Config cfg = resolve_config(g);
    data = load_dataset(a.data, cfg.features);
    tr = std::make_unique<Trainer>(cfg, dataset_speakers(data));
  }
  const long target = tr->config().training.max_steps;
  const long n = std::max(0L, target - tr->step());
  std::ofstream log_stream;
  if (!a.log.empty()) {
    log_stream.open(a.log, std::ios::app);
    check(log_stream.good(), "cannot open log file ", a.log);
  }
  tr->run(data, static_cast<int>(n), a.log.empty() ? nullptr : &log_stream, a.out);
  save_checkpoint(tr->checkpoint(), a.out);
  std::cout << "pretrain: " << n << " steps, " << data.size() << " utterances, "
            << tr->speakers().size() << " speakers -> " << a.out << "\n";
  return 0;
}

struct FinetuneArgs {
  std::string data, out, log, target, speaker_init;
};

int cmd_finetune(const Globals& g, const FinetuneArgs& a) {
  require(a.data, "finetune requires --data with a manifest path");
  require(a.out, "finetune requires --out with a checkpoint path");
  require(g.checkpoint_path, "finetune requires --checkpoint with the pretrained model");
  Checkpoint ck = load_checkpoint(g.checkpoint_path);
  overlay_runtime(ck, g);
  auto data = load_dataset(a.data, ck.config.features);
  const auto speakers = dataset_speakers(data);
  check(speakers.size() == 1, "finetune data must hold a single speaker, found ",
        speakers.size());
  const std::string target = a.target.empty() ? speakers[0] : a.target;
  check(target == speakers[0], "--target ", target, " does not match the data speaker ",
        speakers[0]);
  std::optional<std::vector<double>> init;
  if (!a.speaker_init.empty()) {
    std::string text = read_text_file(a.speaker_init);
    for (char& c : text)
      if (c == ',') c = ' ';
    std::istringstream is(text);
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    check(!v.empty(), "speaker init file ", a.speaker_init, " holds no numbers");
    init = std::move(v);
  }
  Trainer tr(begin_finetune(std::move(ck), target, init ? &*init : nullptr));
  const long target_steps = tr.config().training.max_steps;
  const long n = std::max(0L, target_steps - tr.step());
  std::ofstream log_stream;
  if (!a.log.empty()) {
    log_stream.open(a.log, std::ios::app);
    check(log_stream.good(), "cannot open log file ", a.log);
  }
  tr.run(data, static_cast<int>(n), a.log.empty() ? nullptr : &log_stream, a.out);
  save_checkpoint(tr.checkpoint(), a.out);
  std::cout << "finetune: " << n << " steps on speaker " << target << " -> " << a.out << "\n";
  return 0;
}

struct ConvertArgs {
  std::string in, out, target, id;
  std::string transcript, transcript_file, transcript_cmd;
  std::string mel_out, meta_out;
  std::string prosody_mode;
  double prosody_scale = std::numeric_limits<double>::quiet_NaN();
};

std::unique_ptr<TranscriptProvider> make_provider(const ConvertArgs& a) {
  const int sources = (!a.transcript.empty()) + (!a.transcript_file.empty()) +
                      (!a.transcript_cmd.empty());
  check(sources <= 1, "give at most one of --transcript, --transcript-file, --transcript-cmd");
  check(sources == 1, "conversion needs a transcript source: --transcript, --transcript-file, ",
        "or --transcript-cmd");
  if (!a.transcript_file.empty())
    return std::make_unique<FileTranscriptProvider>(a.transcript_file);
  if (!a.transcript_cmd.empty())
    return std::make_unique<CommandTranscriptProvider>(a.transcript_cmd);
  return nullptr;  // literal override, no provider involved
}

int cmd_convert(const Globals& g, const ConvertArgs& a) {
  require(a.in, "convert requires --in with the source wav");
  require(a.out, "convert requires --out with the output wav path");
  require(a.target, "convert requires --target with the target speaker");
  require(g.checkpoint_path, "convert requires --checkpoint");
  auto provider = make_provider(a);
  Converter conv(load_checkpoint(g.checkpoint_path));
  if (!g.config_path.empty()) conv.pipeline() = load_config(g.config_path).pipeline;
  if (!a.prosody_mode.empty()) conv.pipeline().prosody_mode = a.prosody_mode;
  if (!std::isnan(a.prosody_scale)) conv.pipeline().prosody_scale = a.prosody_scale;

  ConversionRequest req;
  req.source_audio = a.in;
  req.utterance_id = a.id.empty() ? fs::path(a.in).stem().string() : a.id;
  req.target_speaker = a.target;
  if (!a.transcript.empty()) req.transcript_override = &a.transcript;
  req.provider = provider.get();
  req.seed = g.seed >= 0 ? static_cast<uint64_t>(g.seed) : conv.config().training.seed;

  ConversionResult res = conv.convert(req);
  save_wav(a.out, res.audio);
  if (!a.mel_out.empty()) save_mel(a.mel_out, res.mel);
  const json meta = res.metadata(a.target, conv.pipeline());
  if (!a.meta_out.empty()) write_text_file(a.meta_out, meta.dump(2) + "\n");
  std::cout << meta.dump() << "\n";
  return 0;
}

int cmd_extract_codes(const Globals& g, const std::string& data, const std::string& out) {
  require(data, "extract-codes requires --data with a manifest path");
  require(out, "extract-codes requires --out with a csv path");
  require(g.checkpoint_path, "extract-codes requires --checkpoint");
  Converter conv(load_checkpoint(g.checkpoint_path));
  std::vector<CodeRow> rows;
  for (const auto& e : read_manifest(data))
    rows.push_back({e.id, e.speaker, conv.extract_code(e.audio)});
  write_codes_csv(out, rows, conv.config().model.prosody_dim);
  std::cout << "extract-codes: " << rows.size() << " codes -> " << out << "\n";
  return 0;
}

int cmd_eval_cer(const std::string& ref_path, const std::string& hyp_path,
                 const std::string& out_csv) {
  require(ref_path, "eval-cer requires --ref with reference transcripts");
  require(hyp_path, "eval-cer requires --hyp with hypothesis transcripts");
  const auto refs = read_transcript_table(ref_path);
  std::map<std::string, std::string> hyps;
  for (const auto& [id, text] : read_transcript_table(hyp_path)) hyps[id] = text;
  check(!refs.empty(), "no reference transcripts in ", ref_path);

  std::string csv = "id,cer,wer,char_edits,ref_chars,word_edits,ref_words\n";
  long char_edits = 0, ref_chars = 0, word_edits = 0, ref_words = 0;
  char buf[160];
  for (const auto& [id, ref] : refs) {
    auto it = hyps.find(id);
    check(it != hyps.end(), "no hypothesis for utterance ", id, " in ", hyp_path);
    const ErrorRateReport r = error_rates(ref, it->second);
    char_edits += r.char_ops.distance;
    ref_chars += r.ref_chars;
    word_edits += r.word_ops.distance;
    ref_words += r.ref_words;
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%ld,%ld,%ld,%ld", r.cer, r.wer,
                  r.char_ops.distance, r.ref_chars, r.word_ops.distance, r.ref_words);
    csv += csv_escape(id) + "," + buf + "\n";
    std::snprintf(buf, sizeof(buf), "%-24s cer=%.4f wer=%.4f", id.c_str(), r.cer, r.wer);
    std::cout << buf << "\n";
  }
  const double cer = static_cast<double>(char_edits) / ref_chars;
  const double wer = static_cast<double>(word_edits) / ref_words;
  std::snprintf(buf, sizeof(buf), "%-24s cer=%.4f wer=%.4f (%ld utterances)", "TOTAL", cer, wer,
                static_cast<long>(refs.size()));
  std::cout << buf << "\n";
  if (!out_csv.empty()) {
    std::snprintf(buf, sizeof(buf), "TOTAL,%.4f,%.4f,%ld,%ld,%ld,%ld", cer, wer, char_edits,
                  ref_chars, word_edits, ref_words);
    csv += std::string(buf) + "\n";
    write_text_file(out_csv, csv);
  }
  return 0;
}

int cmd_eval_mos(const std::string& ratings_path, const std::string& out_csv) {
  require(ratings_path, "eval-mos requires --ratings with a ratings csv");
  const auto cells = mos_cells(read_ratings_csv(ratings_path));
  std::cout << mos_table_text(cells);
  if (!out_csv.empty()) write_text_file(out_csv, mos_table_csv(cells));
  return 0;
}

int cmd_plot_codes(const Globals& g, const std::string& codes_path, const std::string& out_png,
                   const std::string& coords_csv, bool use_tsne) {
  require(codes_path, "plot-codes requires --codes with a code csv");
  require(out_png, "plot-codes requires --out with a png path");
  const auto rows = read_codes_csv(codes_path);
  check(rows.size() >= 3, "plot-codes needs at least 3 codes, got ", rows.size());
  const int dim = static_cast<int>(rows[0].code.size());
  const int n = static_cast<int>(rows.size());
  std::vector<double> codes;
  for (const auto& r : rows) {
    check(static_cast<int>(r.code.size()) == dim, "inconsistent code dimensions in ", codes_path);
    codes.insert(codes.end(), r.code.begin(), r.code.end());
  }
  std::vector<std::string> names;
  for (const auto& r : rows)
    if (std::find(names.begin(), names.end(), r.speaker) == names.end())
      names.push_back(r.speaker);
  std::sort(names.begin(), names.end());
  std::vector<int> labels;
  for (const auto& r : rows)
    labels.push_back(static_cast<int>(std::find(names.begin(), names.end(), r.speaker) -
                                      names.begin()));

  Projection proj;
  if (use_tsne) {
    proj = tsne_codes(codes, n, dim, g.seed >= 0 ? static_cast<uint64_t>(g.seed) : 1234);
  } else {
    proj = project_codes(codes, n, dim);
    if (proj.degenerate)
      std::cerr << "warning: all codes identical; every point projected to the origin\n";
  }
  plot_scatter_png(out_png, proj.points, n, labels);
  if (!coords_csv.empty()) {
    std::string csv = "utterance_id,speaker_id,x,y\n";
    char buf[80];
    for (int i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.8g,%.8g", proj.points[i * 2], proj.points[i * 2 + 1]);
      csv += csv_escape(rows[i].utterance) + "," + csv_escape(rows[i].speaker) + buf + "\n";
    }
    write_text_file(coords_csv, csv);
  }
  std::map<int, int> counts;
  for (int l : labels) counts[l]++;
  bool scoreable = counts.size() >= 2;
  for (const auto& [l, c] : counts)
    if (c < 5) scoreable = false;
  if (scoreable) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mixing_score=%.3f", mixing_score(codes, n, dim, labels));
    std::cout << buf << "\n";
  } else {
    std::cout << "mixing_score=n/a (needs >=2 speakers with >=5 codes each)\n";
  }
  std::cout << "plot-codes: " << n << " codes, " << names.size() << " speakers -> " << out_png
            << "\n";
  return 0;
}

int cmd_plot_mel(const Globals& g, const std::string& in, const std::string& out_png) {
  require(in, "plot-mel requires --in with a wav or mel container");
  require(out_png, "plot-mel requires --out with a png path");
  MelSpectrogram mel;
  if (fs::path(in).extension() == ".wav") {
    const Config cfg = resolve_config(g);
    mel = mel_spectrogram(load_waveform(in, cfg.features.sample_rate), cfg.features);
  } else {
    mel = load_mel(in);
  }
  plot_mel_png(out_png, mel);
  std::cout << "plot-mel: " << mel.frames << " frames -> " << out_png << "\n";
  return 0;
}

int cmd_sweep_scale(const Globals& g, const ConvertArgs& a, const std::string& out_dir) {
  require(a.in, "sweep-scale requires --in with the source wav");
  require(out_dir, "sweep-scale requires --out-dir");
  require(a.target, "sweep-scale requires --target with the target speaker");
  require(g.checkpoint_path, "sweep-scale requires --checkpoint");
  auto provider = make_provider(a);
  Converter conv(load_checkpoint(g.checkpoint_path));
  if (!g.config_path.empty()) conv.pipeline() = load_config(g.config_path).pipeline;

  const std::string id = a.id.empty() ? fs::path(a.in).stem().string() : a.id;
  std::string transcript =
      !a.transcript.empty() ? a.transcript : provider->transcript(id, a.in);
  const uint64_t seed = g.seed >= 0 ? static_cast<uint64_t>(g.seed)
                                    : conv.config().training.seed;
  fs::create_directories(out_dir);
  const std::vector<double> base = conv.extract_code(a.in);

  const double scales[] = {3.0, 1.5, 1.0, 0.0, -1.5, -3.0};
  for (double s : scales) {
    const std::vector<double> code = scale_code(base, s);
    ConversionResult res = conv.synthesize(transcript, a.target, &code, seed);
    auto gl = griffin_lim(res.mel, conv.config().features, conv.pipeline().griffin_lim_iters,
                          conv.pipeline().wav_peak, conv.pipeline().normalize_wav);
    char tag[32];
    std::snprintf(tag, sizeof(tag), "%g", s);
    const std::string stem = (fs::path(out_dir) / (std::string("scale_") + tag)).string();
    save_wav(stem + ".wav", gl.audio);
    save_mel(stem + ".mel", res.mel);
    plot_mel_png(stem + ".png", res.mel);
    std::cout << "scale " << tag << ": " << res.frames << " frames"
              << (res.truncated ? " (truncated)" : "") << " -> " << stem << ".wav\n";
  }
  return 0;
}

int cmd_make_corpus(const Globals& g, const std::string& out_dir, int speakers, int utterances) {
  require(out_dir, "make-corpus requires --out with a directory");
  const Config cfg = resolve_config(g);
  const std::string manifest = make_synthetic_corpus(out_dir, speakers, utterances,
                                                     cfg.features.sample_rate,
                                                     cfg.training.seed);
  std::cout << "make-corpus: " << speakers << " speakers x " << utterances
            << " utterances -> " << manifest << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recognition-synthesis voice conversion with global prosody codes"};
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "config file (json)");
  app.add_option("--checkpoint", g.checkpoint_path, "model checkpoint path");
  app.add_option("--seed", g.seed, "random seed override");
  app.add_flag("--deterministic", g.deterministic,
               "force deterministic execution (always on; accepted for compatibility)");
  app.add_flag("--dump-config", g.dump_config, "print the effective config and exit");

  TrainArgs pre;
  auto* c_pre = app.add_subcommand("pretrain", "multi-speaker pretraining");
  c_pre->add_option("--data", pre.data, "training manifest csv");
  c_pre->add_option("--out", pre.out, "output checkpoint path");
  c_pre->add_option("--log", pre.log, "jsonl training log");

  FinetuneArgs fin;
  auto* c_fin = app.add_subcommand("finetune", "single-speaker finetuning");
  c_fin->add_option("--data", fin.data, "target speaker manifest csv");
  c_fin->add_option("--out", fin.out, "output checkpoint path");
  c_fin->add_option("--log", fin.log, "jsonl training log");
  c_fin->add_option("--target", fin.target, "target speaker name (defaults to the data speaker)");
  c_fin->add_option("--speaker-init", fin.speaker_init,
                    "file of numbers initializing a new speaker embedding");

  ConvertArgs cv;
  auto* c_cv = app.add_subcommand("convert", "convert one utterance to the target speaker");
  c_cv->add_option("--in", cv.in, "source wav");
  c_cv->add_option("--out", cv.out, "output wav");
  c_cv->add_option("--target", cv.target, "target speaker name");
  c_cv->add_option("--id", cv.id, "utterance id for transcript lookup");
  c_cv->add_option("--transcript", cv.transcript, "literal transcript (bypasses any provider)");
  c_cv->add_option("--transcript-file", cv.transcript_file, "csv transcript lookup by id");
  c_cv->add_option("--transcript-cmd", cv.transcript_cmd,
                   "external recognizer command, receives the wav path");
  c_cv->add_option("--mel-out", cv.mel_out, "also write the synthesized mel container");
  c_cv->add_option("--meta-out", cv.meta_out, "write conversion metadata json");
  c_cv->add_option("--prosody-mode", cv.prosody_mode, "transfer | off");
  c_cv->add_option("--prosody-scale", cv.prosody_scale, "prosody code scale factor");

  std::string ec_data, ec_out;
  auto* c_ec = app.add_subcommand("extract-codes", "prosody codes for a manifest");
  c_ec->add_option("--data", ec_data, "manifest csv");
  c_ec->add_option("--out", ec_out, "output code csv");

  std::string cer_ref, cer_hyp, cer_out;
  auto* c_cer = app.add_subcommand("eval-cer", "character/word error rates");
  c_cer->add_option("--ref", cer_ref, "reference transcripts csv");
  c_cer->add_option("--hyp", cer_hyp, "hypothesis transcripts csv");
  c_cer->add_option("--out", cer_out, "per-utterance report csv");

  std::string mos_ratings, mos_out;
  auto* c_mos = app.add_subcommand("eval-mos", "MOS means with 95% intervals");
  c_mos->add_option("--ratings", mos_ratings, "ratings csv");
  c_mos->add_option("--out", mos_out, "report csv");

  std::string pc_codes, pc_out, pc_coords;
  bool pc_tsne = false;
  auto* c_pc = app.add_subcommand("plot-codes", "2-D projection of prosody codes");
  c_pc->add_option("--codes", pc_codes, "code csv from extract-codes");
  c_pc->add_option("--out", pc_out, "scatter plot png");
  c_pc->add_option("--coords", pc_coords, "projected coordinates csv");
  c_pc->add_flag("--tsne", pc_tsne, "use seeded t-SNE instead of the principal components");

  std::string pm_in, pm_out;
  auto* c_pm = app.add_subcommand("plot-mel", "mel spectrogram heat map");
  c_pm->add_option("--in", pm_in, "wav or mel container");
  c_pm->add_option("--out", pm_out, "png path");

  ConvertArgs sw;
  std::string sw_dir;
  auto* c_sw = app.add_subcommand("sweep-scale",
                                  "synthesize one utterance at scales 3, 1.5, 1, 0, -1.5, -3");
  c_sw->add_option("--in", sw.in, "source wav");
  c_sw->add_option("--target", sw.target, "target speaker name");
  c_sw->add_option("--id", sw.id, "utterance id for transcript lookup");
  c_sw->add_option("--transcript", sw.transcript, "literal transcript");
  c_sw->add_option("--transcript-file", sw.transcript_file, "csv transcript lookup by id");
  c_sw->add_option("--transcript-cmd", sw.transcript_cmd, "external recognizer command");
  c_sw->add_option("--out-dir", sw_dir, "output directory");

  std::string mc_out;
  int mc_speakers = 4, mc_utts = 10;
  auto* c_mc = app.add_subcommand("make-corpus", "deterministic synthetic training corpus");
  c_mc->add_option("--out", mc_out, "output directory");
  c_mc->add_option("--speakers", mc_speakers, "number of speakers");
  c_mc->add_option("--utterances", mc_utts, "utterances per speaker");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (g.dump_config) {
      std::cout << dump_config(resolve_config(g));
      return 0;
    }
    if (c_pre->parsed()) return cmd_pretrain(g, pre);
    if (c_fin->parsed()) return cmd_finetune(g, fin);
    if (c_cv->parsed()) return cmd_convert(g, cv);
    if (c_ec->parsed()) return cmd_extract_codes(g, ec_data, ec_out);
    if (c_cer->parsed()) return cmd_eval_cer(cer_ref, cer_hyp, cer_out);
    if (c_mos->parsed()) return cmd_eval_mos(mos_ratings, mos_out);
    if (c_pc->parsed()) return cmd_plot_codes(g, pc_codes, pc_out, pc_coords, pc_tsne);
    if (c_pm->parsed()) return cmd_plot_mel(g, pm_in, pm_out);
    if (c_sw->parsed()) return cmd_sweep_scale(g, sw, sw_dir);
    if (c_mc->parsed()) return cmd_make_corpus(g, mc_out, mc_speakers, mc_utts);
    std::cerr << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
