#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "support/tmpdir.hpp"

using nlohmann::json;
using testsupport::TempDir;

namespace {

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr combined
};

RunResult run_cli(const std::string& args) {
  const char* bin = std::getenv("URPCA_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = "\"" + std::string(bin) + "\" " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_tone_file(const std::string& path, int n, int bin) {
  std::ofstream f(path);
  f << std::setprecision(17);
  f << "# synthetic single-tone beat signal\n";
  for (int i = 0; i < n; ++i) {
    const double w = 2.0 * 3.14159265358979323846 * bin * i / n;
    f << std::cos(w) << " " << std::sin(w) << "\n";
  }
}

// one small dataset plus a trained checkpoint, built once and reused
struct Pipeline {
  TempDir dir;
  std::string data, ckpt, ranges;

  Pipeline() {
    data = dir.file("data");
    ckpt = dir.file("model.urpc");
    ranges = dir.file("ranges.json");
    std::ofstream(ranges) << R"({"radar": {"n_samples": 256}})";
    RunResult gen = run_cli("gen --out \"" + data + "\" --train 24 --val 8 --test 8 --seed 3 " +
                            "--ranges \"" + ranges + "\"");
    INFO(gen.out);
    REQUIRE(gen.code == 0);
    REQUIRE(gen.out.find("wrote 24/8/8") != std::string::npos);

    RunResult tr = run_cli("train --data \"" + data + "\" --variant conv --layers 1 --out \"" +
                           ckpt + "\" --epochs 2 --batch 8 --lr 1e-3 --seed 2");
    INFO(tr.out);
    REQUIRE(tr.code == 0);
    REQUIRE(tr.out.find("epoch 2 train ") != std::string::npos);
    REQUIRE(tr.out.find("checkpoint written") != std::string::npos);
  }
};

Pipeline& pipe() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("cli prints help and rejects bare invocation") {
  const RunResult help = run_cli("--help");
  CHECK(help.code == 0);
  for (const char* sub : {"gen", "train", "eval", "mitigate", "bench", "sweep-depth"})
    CHECK(help.out.find(sub) != std::string::npos);
  CHECK(run_cli("").code != 0);
  CHECK(run_cli("frobnicate").code != 0);
}

TEST_CASE("generation is reproducible across runs") {
  Pipeline& p = pipe();
  TempDir other;
  const std::string copy = other.file("data2");
  const RunResult gen = run_cli("gen --out \"" + copy + "\" --train 24 --val 8 --test 8 " +
                                "--seed 3 --ranges \"" + p.ranges + "\"");
  REQUIRE(gen.code == 0);
  CHECK(slurp(p.data + "/train.bin") == slurp(copy + "/train.bin"));
  CHECK(slurp(p.data + "/manifest.json") == slurp(copy + "/manifest.json"));
}

TEST_CASE("eval reports metrics for stored and fresh methods") {
  Pipeline& p = pipe();
  const std::string rep = p.dir.file("eval.json");
  const RunResult ev = run_cli("eval --data \"" + p.data + "\" --method ckpt:" + p.ckpt +
                               " --split val --report \"" + rep + "\"");
  INFO(ev.out);
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("auc") != std::string::npos);
  const json j = json::parse(slurp(rep));
  CHECK(j.at("split") == "val");
  CHECK(j.at("n_samples") == 8);
  CHECK(j.at("auc").get<double>() >= 0.0);
  CHECK(j.at("auc").get<double>() <= 1.0);
  CHECK(std::isfinite(j.at("amp_mae_db").get<double>()));

  const RunResult oracle = run_cli("eval --data \"" + p.data + "\" --method oracle --split test");
  REQUIRE(oracle.code == 0);
  CHECK(oracle.out.find("method oracle") != std::string::npos);

  CHECK(run_cli("eval --data \"" + p.data + "\" --method zeroing --split test").code == 0);
  CHECK(run_cli("eval --data \"" + p.data + "\" --method conv:1 --split val").code == 0);
}

TEST_CASE("mitigate writes the spectrum and an svg plot") {
  Pipeline& p = pipe();
  const std::string in = p.dir.file("tone.txt");
  const std::string out = p.dir.file("tone-out.txt");
  const std::string svg = p.dir.file("tone.svg");
  write_tone_file(in, 256, 30);

  const RunResult mit = run_cli("mitigate --method zeroing --in \"" + in + "\" --out \"" + out +
                                "\" --plot \"" + svg + "\"");
  INFO(mit.out);
  REQUIRE(mit.code == 0);

  // a clean constant-envelope tone passes through untouched
  std::ifstream f(out);
  REQUIRE(f.good());
  std::string line;
  bool found = false;
  while (std::getline(f, line)) {
    if (line.rfind("30 ", 0) != 0) continue;
    std::istringstream ls(line);
    int bin;
    double re, im, amp, ph;
    REQUIRE((ls >> bin >> re >> im >> amp >> ph));
    CHECK(std::abs(amp - 20.0 * std::log10(256.0)) < 0.2);
    CHECK(std::abs(ph) < 1e-6);
    found = true;
  }
  CHECK(found);
  CHECK(slurp(svg).rfind("<svg", 0) == 0);

  // the model path accepts the same signal
  const RunResult mm = run_cli("mitigate --method ckpt:" + p.ckpt + " --in \"" + in +
                               "\" --out \"" + p.dir.file("tone-model.txt") + "\"");
  INFO(mm.out);
  CHECK(mm.code == 0);
}

TEST_CASE("bench times each requested method") {
  Pipeline& p = pipe();
  const std::string rep = p.dir.file("bench.json");
  const RunResult be = run_cli("bench --method zeroing --method conv:1 --n 3 --seed 9 --report \"" +
                               rep + "\"");
  INFO(be.out);
  REQUIRE(be.code == 0);
  CHECK(be.out.find("mean ms") != std::string::npos);
  CHECK(be.out.find("zeroing") != std::string::npos);
  const json j = json::parse(slurp(rep));
  REQUIRE(j.size() == 2);
  CHECK(j[0].at("method") == "zeroing");
  CHECK(j[1].at("method") == "conv:1");
  for (const auto& row : j) CHECK(row.at("mean_ms").get<double>() >= 0.0);
}

TEST_CASE("sweep-depth trains one model per layer count") {
  Pipeline& p = pipe();
  const std::string rep = p.dir.file("sweep.json");
  const RunResult sw = run_cli("sweep-depth --data \"" + p.data +
                               "\" --layers 1 --variant conv --epochs 1 --batch 8 --report \"" +
                               rep + "\"");
  INFO(sw.out);
  REQUIRE(sw.code == 0);
  CHECK(sw.out.find("layers 1 phase_mae_deg ") != std::string::npos);
  const json j = json::parse(slurp(rep));
  REQUIRE(j.size() == 1);
  CHECK(j[0].at("layers") == 1);
  CHECK(j[0].at("report").at("split") == "val");
}

TEST_CASE("io failures exit with code 2") {
  Pipeline& p = pipe();
  CHECK(run_cli("eval --data /nonexistent-dir --method zeroing").code == 2);
  CHECK(run_cli("gen --out \"" + p.dir.file("g") + "\" --ranges /nonexistent.json").code == 2);
  CHECK(run_cli("mitigate --method zeroing --in /nonexistent.txt --out /dev/null").code == 2);
}

TEST_CASE("corrupt inputs exit with code 3") {
  Pipeline& p = pipe();
  const std::string tone = p.dir.file("tone3.txt");
  write_tone_file(tone, 64, 5);

  const std::string bad_ckpt = p.dir.file("bad.urpc");
  std::ofstream(bad_ckpt) << "URPC9\nvariant conv\n";
  CHECK(run_cli("mitigate --method ckpt:" + bad_ckpt + " --in \"" + tone +
                "\" --out /dev/null")
            .code == 3);
  std::ofstream(bad_ckpt) << "not a checkpoint at all";
  CHECK(run_cli("mitigate --method ckpt:" + bad_ckpt + " --in \"" + tone +
                "\" --out /dev/null")
            .code == 3);

  const std::string bad_sig = p.dir.file("bad-signal.txt");
  std::ofstream(bad_sig) << "one two\n";
  CHECK(run_cli("mitigate --method zeroing --in \"" + bad_sig + "\" --out /dev/null").code == 3);

  // dataset with a corrupted split file
  TempDir other;
  const std::string broken = other.file("broken");
  std::filesystem::copy(p.data, broken, std::filesystem::copy_options::recursive);
  std::string bytes = slurp(broken + "/val.bin");
  bytes[0] = 'X';
  std::ofstream(broken + "/val.bin", std::ios::binary) << bytes;
  CHECK(run_cli("eval --data \"" + broken + "\" --method zeroing --split val").code == 3);
}

TEST_CASE("diverging training exits with code 4") {
  Pipeline& p = pipe();
  const RunResult tr = run_cli("train --data \"" + p.data + "\" --variant conv --layers 1 --out \"" +
                               p.dir.file("diverged.urpc") + "\" --epochs 1 --batch 8 --lr 1e18");
  INFO(tr.out);
  CHECK(tr.code == 4);
  CHECK(tr.out.find("non-finite") != std::string::npos);
}

TEST_CASE("usage errors exit nonzero") {
  Pipeline& p = pipe();
  CHECK(run_cli("eval --data \"" + p.data + "\" --method warp-drive").code != 0);
  CHECK(run_cli("eval --data \"" + p.data + "\" --method zeroing --split training").code != 0);
  const std::string tone = p.dir.file("tone4.txt");
  write_tone_file(tone, 64, 5);
  CHECK(run_cli("mitigate --method oracle --in \"" + tone + "\" --out /dev/null").code == 1);
}
