#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

#ifndef CIML_CLI_PATH
#error "CIML_CLI_PATH must point at the ciml binary"
#endif

const char* kCli = CIML_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  fs::path tmp = fs::temp_directory_path() / "ciml_cli_out.txt";
  std::string cmd = std::string(kCli) + " " + args + " > " + tmp.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(tmp);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

fs::path work_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("ciml_cli_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// history records carry wall-clock timings; drop them before comparing runs
std::string strip_wall(std::string s) {
  std::size_t pos;
  while ((pos = s.find("\"wall_sec\":")) != std::string::npos) {
    std::size_t end = s.find_first_of(",}", pos);
    s.erase(pos, end - pos);
  }
  return s;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

// dataset shared by the heavier cases; generated once
const fs::path& shared_dataset() {
  static fs::path dir = [] {
    fs::path d = work_dir("data");
    RunResult r = run("synth --out " + d.string() +
                      " --n 120 --views 2 --classes 2 --dim-common 3 --dim-unique 3"
                      " --noise-std 0.3 --seed 4");
    REQUIRE(r.exit_code == 0);
    return d;
  }();
  return dir;
}

std::string fast_flags() {
  return " --batch-size 32 --d-c 3 --d-u 3 --seed 5";
}

}  // namespace

TEST_CASE("cli: bad invocations exit with the config code") {
  REQUIRE(run("").exit_code == 2);                      // missing subcommand
  REQUIRE(run("frobnicate").exit_code == 2);            // unknown subcommand
  REQUIRE(run("train").exit_code == 2);                 // missing --data
  REQUIRE(run("train --data x --no-such-flag").exit_code == 2);
}

TEST_CASE("cli: missing or broken data exits with the data code") {
  fs::path dir = work_dir("baddata");
  RunResult r = run("train --data " + (dir / "nope" / "manifest.json").string() +
                    " --out " + dir.string() + fast_flags());
  REQUIRE(r.exit_code == 3);

  // malformed config file -> config code
  fs::path cfg = dir / "bad.json";
  {
    std::ofstream out(cfg);
    out << "{\"unknown_key\": 1}";
  }
  RunResult r2 = run("train --data " + (shared_dataset() / "manifest.json").string() +
                     " --out " + dir.string() + " --config " + cfg.string());
  REQUIRE(r2.exit_code == 2);
}

TEST_CASE("cli: numeric blowup exits with the numeric code") {
  fs::path dir = work_dir("blowup");
  RunResult r = run("train --data " + (shared_dataset() / "manifest.json").string() +
                    " --out " + dir.string() + fast_flags() +
                    " --epochs 5 --lr-main 1e8 --lr-mine 1e8");
  REQUIRE(r.exit_code == 4);
}

TEST_CASE("cli: synth writes a loadable dataset and reports oracle accuracies") {
  fs::path dir = work_dir("synth");
  RunResult r = run("synth --out " + dir.string() +
                    " --n 60 --views 2 --classes 3 --dim-common 2 --dim-unique 2 --seed 1");
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(dir / "manifest.json"));
  REQUIRE(fs::exists(dir / "oracle.json"));
  REQUIRE(r.output.find("bayes") != std::string::npos);
}

TEST_CASE("cli: train then eval from checkpoint") {
  fs::path dir = work_dir("train");
  RunResult t = run("train --data " + (shared_dataset() / "manifest.json").string() +
                    " --out " + dir.string() + fast_flags() + " --epochs 2");
  REQUIRE(t.exit_code == 0);
  REQUIRE(fs::exists(dir / "checkpoint.bin"));
  REQUIRE(fs::exists(dir / "config.json"));
  REQUIRE(count_lines(dir / "history.jsonl") == 2);  // one record per epoch

  fs::path eval_dir = work_dir("eval");
  RunResult e = run("eval --checkpoint " + (dir / "checkpoint.bin").string() +
                    " --out " + eval_dir.string());
  REQUIRE(e.exit_code == 0);
  REQUIRE(fs::exists(eval_dir / "metrics.json"));
  REQUIRE(e.output.find("acc") != std::string::npos);
}

TEST_CASE("cli: training twice is byte-identical; resume matches a straight run") {
  fs::path a = work_dir("det_a"), b = work_dir("det_b"), c = work_dir("det_c");
  std::string base = "train --data " + (shared_dataset() / "manifest.json").string();

  REQUIRE(run(base + " --out " + a.string() + fast_flags() + " --epochs 4").exit_code == 0);
  REQUIRE(run(base + " --out " + b.string() + fast_flags() + " --epochs 4").exit_code == 0);
  REQUIRE(slurp(a / "checkpoint.bin") == slurp(b / "checkpoint.bin"));
  REQUIRE(strip_wall(slurp(a / "history.jsonl")) == strip_wall(slurp(b / "history.jsonl")));

  REQUIRE(run(base + " --out " + c.string() + fast_flags() + " --epochs 2").exit_code == 0);
  REQUIRE(run(base + " --out " + c.string() + fast_flags() + " --epochs 4 --resume " +
              (c / "checkpoint.bin").string())
              .exit_code == 0);
  REQUIRE(slurp(a / "checkpoint.bin") == slurp(c / "checkpoint.bin"));
}

TEST_CASE("cli: export-embeddings and audit work off a checkpoint") {
  fs::path dir = work_dir("post");
  std::string manifest = (shared_dataset() / "manifest.json").string();
  REQUIRE(run("train --data " + manifest + " --out " + dir.string() + fast_flags() +
              " --epochs 2").exit_code == 0);

  fs::path emb = dir / "embeddings.txt";
  RunResult x = run("export-embeddings --checkpoint " + (dir / "checkpoint.bin").string() +
                    " --data " + manifest + " --out " + emb.string());
  REQUIRE(x.exit_code == 0);
  REQUIRE(fs::exists(emb));
  REQUIRE(fs::exists(emb.string() + ".labels"));

  fs::path audit_dir = work_dir("audit");
  RunResult au = run("audit --checkpoint " + (dir / "checkpoint.bin").string() + " --out " +
                     audit_dir.string());
  REQUIRE(au.exit_code == 0);
  REQUIRE(fs::exists(audit_dir / "audit.json"));
}

TEST_CASE("cli: ablate and sweep emit structured results") {
  fs::path ab = work_dir("ablate");
  std::string manifest = (shared_dataset() / "manifest.json").string();
  RunResult r = run("ablate --data " + manifest + " --trials 2 --out " + ab.string() +
                    fast_flags() + " --epochs 2");
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(ab / "ablation.json"));
  REQUIRE(r.output.find("CIML-v1") != std::string::npos);
  REQUIRE(r.output.find("CIML-v2") != std::string::npos);

  fs::path sw = work_dir("sweep");
  RunResult s = run("sweep --data " + manifest + " --param beta3 --values 0.5,1.0 --trials 1" +
                    " --out " + sw.string() + fast_flags() + " --epochs 2");
  REQUIRE(s.exit_code == 0);
  REQUIRE(fs::exists(sw / "sweep.json"));
}
