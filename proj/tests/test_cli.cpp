// End-to-end tests driving the installed binary through a shell.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "provoc/audio.hpp"
#include "provoc/config.hpp"
#include "provoc/dataset.hpp"
#include "provoc/eval.hpp"
#include "provoc/pipeline.hpp"
#include "provoc/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace provoc;

const std::string& work_dir() {
  static const std::string dir = [] {
    fs::create_directories("cli_work");
    return std::string("cli_work");
  }();
  return dir;
}

std::string wpath(const std::string& leaf) { return work_dir() + "/" + leaf; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run_cli(const std::string& args) {
  static int n = 0;
  const std::string out_path = wpath("stdout_" + std::to_string(n) + ".txt");
  const std::string err_path = wpath("stderr_" + std::to_string(n) + ".txt");
  ++n;
  const std::string cmd = std::string("\"") + PROVOC_CLI_PATH + "\" " + args + " > " +
                          out_path + " 2> " + err_path;
  const int status = std::system(cmd.c_str());
  CliRun r;
  if (status != -1 && WIFEXITED(status)) r.code = WEXITSTATUS(status);
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

bool is_png(const std::string& path) {
  const std::string head = slurp(path);
  return head.size() > 8 && head.compare(0, 4, "\x89PNG") == 0;
}

// Fixture paths filled in by the test cases that create them; later cases
// require them so an upstream failure reports clearly instead of cascading.
std::string g_manifest, g_wav, g_model_ck;

}  // namespace

TEST_CASE("help, missing subcommand, and unknown arguments") {
  const CliRun help = run_cli("--help");
  CHECK(help.code == 0);
  CHECK(contains(help.out, "pretrain"));
  CHECK(contains(help.out, "convert"));
  CHECK(contains(help.out, "sweep-scale"));

  const CliRun bare = run_cli("");
  CHECK(bare.code == 2);
  CHECK(contains(bare.err, "convert"));

  const CliRun sub = run_cli("frobnicate");
  CHECK(sub.code == 2);
  CHECK(!sub.err.empty());

  const CliRun flag = run_cli("--no-such-flag");
  CHECK(flag.code == 2);

  const CliRun subflag = run_cli("eval-mos --no-such-flag");
  CHECK(subflag.code == 2);
}

TEST_CASE("dump-config") {
  const CliRun plain = run_cli("--dump-config");
  REQUIRE(plain.code == 0);
  const json j = json::parse(plain.out);
  CHECK(j.contains("features"));
  CHECK(j.contains("model"));
  CHECK(j.contains("training"));
  CHECK(j.contains("pipeline"));
  CHECK(j.at("model").at("layer_width").get<int>() == 128);

  // The dump must load back and reproduce itself.
  const std::string cfg_path = wpath("dumped.json");
  std::ofstream(cfg_path) << plain.out;
  const CliRun again = run_cli("--dump-config --config " + cfg_path);
  REQUIRE(again.code == 0);
  CHECK(again.out == plain.out);

  const std::string mini_path = wpath("mini.json");
  std::ofstream(mini_path) << "{\"preset\": \"mini\"}\n";
  const CliRun mini = run_cli("--dump-config --config " + mini_path + " --seed 77");
  REQUIRE(mini.code == 0);
  const json m = json::parse(mini.out);
  CHECK(m.at("features").at("n_mels").get<int>() == 8);
  CHECK(m.at("model").at("layer_width").get<int>() == 32);
  CHECK(m.at("training").at("seed").get<uint64_t>() == 77);

  const std::string bad_path = wpath("bad.json");
  std::ofstream(bad_path) << "{\"model\": {\"no_such_knob\": 3}}\n";
  const CliRun bad = run_cli("--dump-config --config " + bad_path);
  CHECK(bad.code == 1);
  CHECK(contains(bad.err, "no_such_knob"));
}

TEST_CASE("missing files exit 1 with the offending path") {
  const CliRun cv = run_cli("convert --checkpoint cli_work/nope.ck --in x.wav --out y.wav "
                            "--target bob --transcript hi");
  CHECK(cv.code == 1);
  CHECK(contains(cv.err, "cli_work/nope.ck"));

  const CliRun mos = run_cli("eval-mos --ratings cli_work/absent.csv");
  CHECK(mos.code == 1);
  CHECK(contains(mos.err, "absent.csv"));

  const CliRun pm = run_cli("plot-mel --in cli_work/absent.wav --out cli_work/x.png");
  CHECK(pm.code == 1);

  const CliRun nosrc = run_cli("convert --checkpoint cli_work/nope.ck --in x.wav --out y.wav "
                               "--target bob");
  CHECK(nosrc.code == 1);
  CHECK(contains(nosrc.err, "transcript"));
}

TEST_CASE("make-corpus writes a loadable manifest") {
  const CliRun r = run_cli("make-corpus --out cli_work/corpus --speakers 2 --utterances 2 "
                           "--seed 7");
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "2 speakers"));
  const std::string manifest = wpath("corpus/manifest.csv");
  REQUIRE(fs::exists(manifest));

  const auto entries = read_manifest(manifest);
  REQUIRE(entries.size() == 4);
  for (const auto& e : entries) {
    CHECK(fs::exists(e.audio));
    CHECK(!e.transcript.empty());
  }
  CHECK(load_wav(entries[0].audio).sample_rate == 24000);
  g_manifest = manifest;
  g_wav = entries[0].audio;
}

TEST_CASE("pretrain then finetune through the binary") {
  REQUIRE(!g_manifest.empty());
  const std::string cfg2 = wpath("train2.json");
  std::ofstream(cfg2) << "{\"preset\": \"mini\", \"training\": {\"max_steps\": 2, "
                         "\"log_every\": 1}}\n";
  const std::string pre_ck = wpath("pre.ck");
  const std::string log_path = wpath("pre_log.jsonl");
  fs::remove(log_path);  // the trainer appends
  const CliRun pre = run_cli("pretrain --config " + cfg2 + " --data " + g_manifest +
                             " --out " + pre_ck + " --log " + log_path);
  REQUIRE(pre.code == 0);
  CHECK(contains(pre.out, "2 steps"));

  const Checkpoint ck = load_checkpoint(pre_ck);
  CHECK(ck.stage == "pretrain");
  CHECK(ck.step == 2);
  CHECK(ck.speakers == std::vector<std::string>{"spk0", "spk1"});

  std::istringstream log_lines(slurp(log_path));
  std::string line;
  int rows = 0;
  while (std::getline(log_lines, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    CHECK(rec.at("step").get<long>() == ++rows);
    CHECK(rec.at("stage").get<std::string>() == "pretrain");
    CHECK(rec.contains("loss"));
    CHECK(rec.contains("lr"));
  }
  CHECK(rows == 2);

  // Resuming with max_steps already reached performs zero steps.
  const std::string resumed = wpath("pre_resume.ck");
  const CliRun res = run_cli("pretrain --config " + cfg2 + " --checkpoint " + pre_ck +
                             " --data " + g_manifest + " --out " + resumed);
  REQUIRE(res.code == 0);
  CHECK(contains(res.out, "0 steps"));

  // Single-speaker slice of the corpus, written next to it so the relative
  // audio paths keep resolving.
  std::istringstream all(slurp(g_manifest));
  std::string ft_manifest_text, row;
  std::getline(all, row);
  ft_manifest_text = row + "\n";
  while (std::getline(all, row))
    if (row.size() >= 5 && row.substr(row.size() - 5) == ",spk0") ft_manifest_text += row + "\n";
  const std::string ft_manifest = wpath("corpus/ft.csv");
  std::ofstream(ft_manifest) << ft_manifest_text;

  const std::string cfg3 = wpath("train3.json");
  std::ofstream(cfg3) << "{\"preset\": \"mini\", \"training\": {\"max_steps\": 3, "
                         "\"log_every\": 1}}\n";
  const std::string ft_ck = wpath("ft.ck");
  const CliRun fin = run_cli("finetune --config " + cfg3 + " --checkpoint " + pre_ck +
                             " --data " + ft_manifest + " --out " + ft_ck);
  REQUIRE(fin.code == 0);
  CHECK(contains(fin.out, "1 steps on speaker spk0"));
  const Checkpoint ft = load_checkpoint(ft_ck);
  CHECK(ft.stage == "finetune");
  CHECK(ft.step == 3);

  const CliRun wrong = run_cli("finetune --config " + cfg3 + " --checkpoint " + pre_ck +
                               " --data " + ft_manifest + " --out " + ft_ck +
                               " --target spk1");
  CHECK(wrong.code == 1);
  CHECK(contains(wrong.err, "spk1"));
}

TEST_CASE("convert produces audio, mel, and metadata") {
  REQUIRE(!g_wav.empty());
  Config cfg = mini_config();
  cfg.pipeline.max_decode_frames = 8;
  cfg.pipeline.griffin_lim_iters = 3;
  Trainer tr(cfg, {"alice", "bob"});
  tr.store().get("tts.stop_head.bias").data()[0] = -40.0;  // fixed-length rollouts
  g_model_ck = wpath("model.ck");
  save_checkpoint(tr.checkpoint(), g_model_ck);

  const std::string out_wav = wpath("conv.wav");
  const std::string out_mel = wpath("conv.mel");
  const std::string out_meta = wpath("conv.json");
  const std::string base = "convert --checkpoint " + g_model_ck + " --in " + g_wav +
                           " --target bob --transcript \"go red\" --deterministic";
  const CliRun r = run_cli(base + " --out " + out_wav + " --mel-out " + out_mel +
                           " --meta-out " + out_meta + " --seed 11");
  REQUIRE(r.code == 0);

  const Waveform w = load_wav(out_wav);
  CHECK(w.sample_rate == 24000);
  CHECK(static_cast<int>(w.samples.size()) == 7 * 300);

  const MelSpectrogram mel = load_mel(out_mel);
  CHECK(mel.frames == 8);
  CHECK(mel.n_mels == 8);

  const json meta = json::parse(slurp(out_meta));
  CHECK(meta.at("transcript").get<std::string>() == "go red");
  CHECK(meta.at("target_speaker").get<std::string>() == "bob");
  CHECK(meta.at("frames").get<int>() == 8);
  CHECK(meta.at("truncated").get<bool>() == true);
  CHECK(meta.at("prosody_mode").get<std::string>() == "transfer");
  CHECK(json::parse(r.out) == meta);

  // Seeds are honored: same seed reproduces the bytes, another seed does not.
  const std::string wav_b = wpath("conv_b.wav");
  const std::string wav_c = wpath("conv_c.wav");
  REQUIRE(run_cli(base + " --out " + wav_b + " --seed 11").code == 0);
  REQUIRE(run_cli(base + " --out " + wav_c + " --seed 12").code == 0);
  CHECK(slurp(out_wav) == slurp(wav_b));
  CHECK(slurp(out_wav) != slurp(wav_c));

  const CliRun ghost = run_cli("convert --checkpoint " + g_model_ck + " --in " + g_wav +
                               " --transcript \"go red\" --out " + wav_b +
                               " --seed 11 --target carol");
  CHECK(ghost.code == 1);
  CHECK(contains(ghost.err, "carol"));

  const CliRun dup = run_cli(base + " --out " + wav_b + " --seed 11 --target carol");
  CHECK(dup.code == 2);  // repeated --target is a usage error
}

TEST_CASE("extract-codes then plot-codes") {
  REQUIRE(!g_manifest.empty());
  REQUIRE(!g_model_ck.empty());
  const std::string codes_csv = wpath("codes.csv");
  const CliRun ex = run_cli("extract-codes --checkpoint " + g_model_ck + " --data " +
                            g_manifest + " --out " + codes_csv);
  REQUIRE(ex.code == 0);
  const auto rows = read_codes_csv(codes_csv);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) CHECK(row.code.size() == 8);

  const std::string png = wpath("codes.png");
  const std::string coords = wpath("coords.csv");
  const CliRun pc = run_cli("plot-codes --codes " + codes_csv + " --out " + png +
                            " --coords " + coords);
  REQUIRE(pc.code == 0);
  CHECK(is_png(png));
  CHECK(contains(slurp(coords), "utterance_id,speaker_id,x,y"));
  CHECK(contains(pc.out, "mixing_score=n/a"));  // 2 codes per speaker is below the k-NN floor
}

TEST_CASE("sweep-scale writes one bundle per scale") {
  REQUIRE(!g_wav.empty());
  REQUIRE(!g_model_ck.empty());
  const CliRun r = run_cli("sweep-scale --checkpoint " + g_model_ck + " --in " + g_wav +
                           " --target alice --transcript \"cat sun\" --out-dir cli_work/sweep");
  REQUIRE(r.code == 0);
  for (const std::string tag : {"3", "1.5", "1", "0", "-1.5", "-3"}) {
    const std::string stem = wpath("sweep/scale_" + tag);
    CHECK(fs::exists(stem + ".wav"));
    CHECK(fs::exists(stem + ".mel"));
    CHECK(is_png(stem + ".png"));
  }
  CHECK(contains(r.out, "scale 3:"));
  CHECK(contains(r.out, "scale -3:"));
  // Scale 1 and scale 0 drive different codes through the decoder.
  CHECK(slurp(wpath("sweep/scale_1.mel")) != slurp(wpath("sweep/scale_0.mel")));
}

TEST_CASE("plot-mel accepts wav and mel container input") {
  REQUIRE(!g_wav.empty());
  const std::string png_a = wpath("mel_wav.png");
  REQUIRE(run_cli("plot-mel --in " + g_wav + " --out " + png_a).code == 0);
  CHECK(is_png(png_a));

  const std::string png_b = wpath("mel_container.png");
  REQUIRE(run_cli("plot-mel --in " + wpath("conv.mel") + " --out " + png_b).code == 0);
  CHECK(is_png(png_b));
}

TEST_CASE("eval-cer aggregates over the reference table") {
  const std::string refs = wpath("refs.csv");
  const std::string hyps = wpath("hyps.csv");
  std::ofstream(refs) << "id,transcript\nu1,go now\nu2,red cat\n";
  std::ofstream(hyps) << "id,transcript\nu1,go cow\nu2,red cat\n";
  const std::string report = wpath("cer.csv");
  const CliRun r = run_cli("eval-cer --ref " + refs + " --hyp " + hyps + " --out " + report);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "cer=0.1667"));  // u1: one substitution in six characters
  CHECK(contains(r.out, "cer=0.0000"));
  CHECK(contains(r.out, "TOTAL"));
  CHECK(contains(r.out, "cer=0.0769"));  // 1 edit over 13 reference characters
  CHECK(contains(r.out, "wer=0.2500"));
  const std::string csv = slurp(report);
  CHECK(contains(csv, "id,cer,wer,char_edits,ref_chars,word_edits,ref_words"));
  CHECK(contains(csv, "TOTAL,0.0769,0.2500,1,13,1,4"));

  std::ofstream(hyps) << "id,transcript\nu1,go cow\n";
  CHECK(run_cli("eval-cer --ref " + refs + " --hyp " + hyps).code == 1);
}

TEST_CASE("eval-mos prints interval estimates") {
  const std::string ratings = wpath("ratings.csv");
  std::ofstream(ratings) << "listener_id,utterance_id,system_id,target_speaker,axis,score\n"
                            "l1,u1,sysA,spk0,naturalness,3\n"
                            "l2,u1,sysA,spk0,naturalness,5\n"
                            "l1,u2,sysA,spk0,similarity,4\n";
  const std::string report = wpath("mos.csv");
  const CliRun r = run_cli("eval-mos --ratings " + ratings + " --out " + report);
  REQUIRE(r.code == 0);
  const std::string pm = "\xC2\xB1";
  CHECK(contains(r.out, "naturalness"));
  CHECK(contains(r.out, "similarity"));
  CHECK(contains(r.out, "4.000" + pm + "1.960"));
  CHECK(contains(r.out, "4.000" + pm + "n/a"));
  CHECK(contains(r.out, "(all)"));
  const std::string csv = slurp(report);
  CHECK(contains(csv, "axis,target,system,n,mean,half_width"));
  CHECK(contains(csv, "naturalness,(all),sysA,2,4"));
}
