#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "afht/afht.h"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "afht_cli_test";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const std::string& args) {
  const fs::path out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string(AFHT_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

int lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

// Small single-tool dataset; `size` sets the frame geometry.
void make_data(const fs::path& dir, int size, int seed) {
  const std::string args = "gen-data --out " + dir.string() + " --n_cases 5 --clips_per_case 1 --train_ratio 0.6 " +
                           "--val_ratio 0.2 --test_ratio 0.2 --two_tool_fraction 0 --frames 12 --contact_frame 8 " +
                           "--quad_half_size 4 --height " + std::to_string(size) + " --width " +
                           std::to_string(size) + " --seed " + std::to_string(seed);
  REQUIRE(cli(args).code == 0);
}

const char* kTinyModel =
    "frame_height = 32\nframe_width = 32\nwindow_n = 2\nstride = 2\nenc_widths = 8,16\nenc_depths = 1,1\n"
    "win_t = 2\nwin_h = 2\nwin_w = 2\ndec_width = 8\ndec_depth = 1\ntoken_dim = 8\ncond_hidden = 8\ncond_dim = 8\n"
    "max_steps = 2\nbatch = 2\nval_every = 0\n";

struct Fixture {
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
  ~Fixture() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "usage errors exit 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("train --no-such-flag 3").code == 1);
  const Run help = cli("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("gen-data") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "gen-data is reproducible and validate reports leakage") {
  make_data(kRoot / "a", 32, 4);
  make_data(kRoot / "b", 32, 4);
  CHECK(slurp(kRoot / "a" / "manifest.jsonl") == slurp(kRoot / "b" / "manifest.jsonl"));
  CHECK(cli("validate --data " + (kRoot / "a").string()).code == 0);

  // Move one clip of case_000 into another split.
  std::ifstream in(kRoot / "a" / "manifest.jsonl");
  std::ofstream out(kRoot / "a" / "leaky.jsonl");
  std::string line;
  bool first = true;
  std::string second_case;
  while (std::getline(in, line)) {
    if (first) {
      out << line << '\n';
      const auto split_pos = line.find("\"split\":\"");
      const std::string split = line.substr(split_pos + 9, line.find('"', split_pos + 9) - split_pos - 9);
      std::string copy = line;
      const std::string other = split == "train" ? "test" : "train";
      copy.replace(split_pos + 9, split.size(), other);
      const auto id = copy.find("\"clip_id\":\"");
      copy.insert(id + 11, "dup_");
      out << copy << '\n';
      first = false;
    } else {
      out << line << '\n';
    }
  }
  out.close();
  const Run r = cli("validate --data " + (kRoot / "a" / "leaky.jsonl").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("case_000") != std::string::npos);
  CHECK(lines(r.err) == 1);
  CHECK(r.err.rfind("afht: error 2", 0) == 0);
}

TEST_CASE_FIXTURE(Fixture, "train, predict, eval and geometry mismatch") {
  make_data(kRoot / "d32", 32, 1);
  make_data(kRoot / "d48", 48, 1);
  {
    std::ofstream cfg(kRoot / "tiny.cfg");
    cfg << kTinyModel;
  }
  const fs::path run = kRoot / "run";
  const Run t = cli("train --data " + (kRoot / "d32").string() + " --config " + (kRoot / "tiny.cfg").string() +
                    " --out " + run.string());
  REQUIRE(t.code == 0);
  CHECK(fs::exists(run / "best.ckpt"));
  CHECK(fs::exists(run / "last.ckpt"));
  CHECK(lines(slurp(run / "train_log.txt")) >= 2);

  const Run e = cli("eval --checkpoint " + (run / "last.ckpt").string() + " --data " + (kRoot / "d32").string() +
                    " --report " + (kRoot / "r.tsv").string());
  CHECK(e.code == 0);
  CHECK(slurp(kRoot / "r.tsv").find("#aggregate") != std::string::npos);

  const Run bad = cli("eval --checkpoint " + (run / "last.ckpt").string() + " --data " + (kRoot / "d48").string());
  CHECK(bad.code == 2);
  CHECK(lines(bad.err) == 1);
  CHECK(bad.err.find("48") != std::string::npos);

  const Run p = cli("predict --checkpoint " + (run / "last.ckpt").string() + " --clip " +
                    (kRoot / "d32" / "frames" / "case_000_s0.afvc").string() +
                    " --frame 3 --surgery cholecystectomy --tool hook --action dissect --out " +
                    (kRoot / "pred").string());
  CHECK(p.code == 0);
  CHECK(fs::exists(kRoot / "pred.grid"));
  CHECK(fs::exists(kRoot / "pred.pgm"));
  CHECK(fs::exists(kRoot / "pred_overlay.ppm"));

  const Run unknown = cli("predict --checkpoint " + (run / "last.ckpt").string() + " --clip " +
                          (kRoot / "d32" / "frames" / "case_000_s0.afvc").string() +
                          " --frame 3 --surgery cholecystectomy --tool laser --action dissect --out " +
                          (kRoot / "pred2").string());
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("laser") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "ablate writes per-preset reports and a comparison table") {
  make_data(kRoot / "d", 32, 2);
  {
    std::ofstream cfg(kRoot / "tiny.cfg");
    cfg << kTinyModel;
  }
  const std::string common = " --data " + (kRoot / "d").string() + " --config " + (kRoot / "tiny.cfg").string() +
                             " --out " + (kRoot / "abl").string();
  REQUIRE(cli("ablate no_tool" + common).code == 0);
  REQUIRE(cli("ablate none" + common).code == 0);
  const std::string table = slurp(kRoot / "abl" / "comparison.txt");
  CHECK(table.find("none") < table.find("no_tool"));
  CHECK(fs::exists(kRoot / "abl" / "none" / "report.tsv"));
  CHECK(cli("ablate no_such_preset" + common).code == 1);
}

TEST_CASE("C API status codes and errors") {
  CHECK(std::string(afht_version()).size() > 0);
  char* out = nullptr;
  CHECK(afht_config_keys("model", &out) == AFHT_OK);
  REQUIRE(out);
  CHECK(std::string(out).find("dec_width") != std::string::npos);
  afht_string_free(out);
  CHECK(afht_config_keys("nonsense", &out) == AFHT_ERR_PARAMETER);
  CHECK(std::string(afht_last_error()).size() > 0);

  afht_model* model = nullptr;
  CHECK(afht_model_load("/nonexistent/path.ckpt", &model) == AFHT_ERR_VALIDATION);
  CHECK(model == nullptr);
  CHECK(afht_train(nullptr, "", "", nullptr, -1, &out) == AFHT_ERR_PARAMETER);
  char* summary = nullptr;
  CHECK(afht_generate_dataset((kRoot / "capi").string().c_str(), "bogus_key = 1", &summary) == AFHT_ERR_PARAMETER);
  fs::remove_all(kRoot);
}
