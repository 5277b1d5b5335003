#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "l2o/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("l2o_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CmdResult run_cli(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(L2O_BENCH_PATH) + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("help exits zero and documents the subcommands") {
  const CmdResult r = run_cli("--help");
  CHECK(r.exit_code == 0);
  for (const char* cmd : {"meta-train", "evaluate", "sweep", "dmd-analyze"})
    CHECK(r.out.find(cmd) != std::string::npos);
}

TEST_CASE("unknown task exits 64 and lists the registry") {
  const CmdResult r =
      run_cli("evaluate --task not-a-task --optimizer adam --out-dir " +
              (work_dir() / "o1").string());
  CHECK(r.exit_code == 64);
  for (const char* name : {"mnist-1l", "mnist-2l", "mnist-batch", "mnist-relu", "fashion-1l",
                           "cifar10-1l", "mnist-train", "quadratic"})
    CHECK(r.err.find(name) != std::string::npos);
}

TEST_CASE("rank above snapshots exits 64") {
  const CmdResult r = run_cli("meta-train --task quadratic --rank 8 --snapshots 4 --out-dir " +
                              (work_dir() / "o2").string());
  CHECK(r.exit_code == 64);
}

TEST_CASE("unknown optimizer exits 64") {
  const CmdResult r = run_cli("evaluate --task quadratic --optimizer rmsprop --out-dir " +
                              (work_dir() / "o3").string());
  CHECK(r.exit_code == 64);
}

TEST_CASE("missing dataset files exit 2 naming the path") {
  const fs::path empty = work_dir() / "no-data";
  fs::create_directories(empty);
  const CmdResult r = run_cli("evaluate --task mnist-1l --optimizer adam --runs 1 --steps 5 "
                              "--data-dir " +
                              empty.string() + " --out-dir " + (work_dir() / "o4").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("no-data") != std::string::npos);
}

TEST_CASE("quadratic meta-train/evaluate round trip with determinism") {
  const fs::path out = work_dir() / "roundtrip";
  const std::string ckpt = (out / "ckpt.json").string();
  const CmdResult train = run_cli(
      "meta-train --task quadratic --rank 1 --snapshots 20 --epochs 2 --inner-steps 40 "
      "--unroll 20 --eval-every 1 --eval-instances 2 --seed 3 --checkpoint " +
      ckpt + " --out-dir " + out.string());
  CHECK(train.exit_code == 0);
  REQUIRE(fs::exists(ckpt));
  REQUIRE(fs::exists(out / "epoch-scores-R1-m20.csv"));
  {
    std::ifstream in(out / "epoch-scores-R1-m20.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,score");
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 2);
  }

  const std::string eval_args =
      "evaluate --task quadratic --optimizer l2o-dmd --checkpoint " + ckpt +
      " --steps 40 --runs 2 --seed 5 --out-dir ";
  const CmdResult e1 = run_cli(eval_args + (out / "e1").string());
  CHECK(e1.exit_code == 0);
  const CmdResult e2 = run_cli(eval_args + (out / "e2").string());
  CHECK(e2.exit_code == 0);
  for (const char* name :
       {"runs-quadratic-l2o-dmd.csv", "curve-quadratic-l2o-dmd.csv",
        "trajectory-quadratic-l2o-dmd.csv", "results-quadratic-l2o-dmd.csv"}) {
    REQUIRE(fs::exists(out / "e1" / name));
    CHECK(slurp(out / "e1" / name) == slurp(out / "e2" / name));
  }

  // The learned-optimizer kinds are enforced against the checkpoint.
  const CmdResult wrong = run_cli("evaluate --task quadratic --optimizer l2o --checkpoint " +
                                  ckpt + " --steps 10 --runs 1 --out-dir " +
                                  (out / "e3").string());
  CHECK(wrong.exit_code == 65);
  const CmdResult mismatch = run_cli("evaluate --task quadratic --optimizer l2o-dmd --rank 2 "
                                     "--checkpoint " +
                                     ckpt + " --steps 10 --runs 1 --out-dir " +
                                     (out / "e4").string());
  CHECK(mismatch.exit_code == 65);
}

TEST_CASE("rank-0 checkpoint round trip drives the gradient-only optimizer") {
  const fs::path out = work_dir() / "l2o-plain";
  const std::string ckpt = (out / "ckpt-r0.json").string();
  const CmdResult train = run_cli(
      "meta-train --task quadratic --rank 0 --epochs 1 --inner-steps 30 --unroll 15 "
      "--eval-every 1 --eval-instances 2 --seed 6 --checkpoint " +
      ckpt + " --out-dir " + out.string());
  REQUIRE(train.exit_code == 0);
  const CmdResult eval = run_cli("evaluate --task quadratic --optimizer l2o --checkpoint " +
                                 ckpt + " --steps 30 --runs 2 --jobs 2 --seed 8 --out-dir " +
                                 (out / "eval").string());
  CHECK(eval.exit_code == 0);
  // The trajectory CSV of a rank-0 optimizer carries no feature columns.
  const std::string traj = slurp(out / "eval" / "trajectory-quadratic-l2o.csv");
  CHECK(traj.rfind("step,loss,update_norm\n", 0) == 0);

  // A window override below the checkpoint rank is a clean contract error,
  // not a crash, even with a worker pool.
  const CmdResult r1 = run_cli(
      "meta-train --task quadratic --rank 2 --snapshots 10 --epochs 1 --inner-steps 30 "
      "--unroll 15 --eval-every 1 --eval-instances 2 --seed 6 --checkpoint " +
      (out / "ckpt-r2.json").string() + " --out-dir " + out.string());
  REQUIRE(r1.exit_code == 0);
  const CmdResult bad = run_cli("evaluate --task quadratic --optimizer l2o-dmd --checkpoint " +
                                (out / "ckpt-r2.json").string() +
                                " --snapshots 1 --steps 10 --runs 2 --jobs 2 --out-dir " +
                                (out / "bad").string());
  CHECK(bad.exit_code == 65);
}

TEST_CASE("adam baseline on the quadratic task") {
  const fs::path out = work_dir() / "adam";
  const CmdResult r = run_cli(
      "evaluate --task quadratic --optimizer adam --lr 0.05 --steps 50 --runs 2 --seed 1 "
      "--out-dir " +
      out.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("Adam on quadratic") != std::string::npos);
  CHECK(fs::exists(out / "results-quadratic-adam.csv"));
}

TEST_CASE("dmd-analyze on a damped oscillation") {
  // x_{k+1} = 0.97 R(0.3) x_k in the plane, loss column decaying too:
  // every sliding window must report eigenvalue modulus below one.
  const fs::path out = work_dir() / "dmd";
  fs::create_directories(out);
  const fs::path traj = out / "traj.csv";
  {
    std::ofstream f(traj);
    f << "a,b,loss\n";
    double x = 1.0, y = 0.0, loss = 1.0;
    for (int k = 0; k < 40; ++k) {
      f << x << ',' << y << ',' << loss << '\n';
      const double c = std::cos(0.3), s = std::sin(0.3);
      const double nx = 0.97 * (c * x - s * y);
      const double ny = 0.97 * (s * x + c * y);
      x = nx;
      y = ny;
      loss *= 0.95;
    }
  }
  const std::string eig_csv = (out / "eig.csv").string();
  const CmdResult r = run_cli("dmd-analyze --input " + traj.string() +
                              " --rank 2 --snapshots 10 --out " + eig_csv + " --modes-out " +
                              (out / "modes.csv").string() + " --out-dir " + out.string());
  CHECK(r.exit_code == 0);
  std::ifstream in(eig_csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,re_1,im_1,re_2,im_2");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    double re1, im1;
    std::getline(ss, cell, ',');
    re1 = std::stod(cell);
    std::getline(ss, cell, ',');
    im1 = std::stod(cell);
    CHECK(std::sqrt(re1 * re1 + im1 * im1) < 1.0);
  }
  CHECK(rows == 40 - 10);  // input rows minus m
  CHECK(fs::exists(out / "modes.csv"));
}

TEST_CASE("dmd-analyze on a constant trajectory reports eigenvalue one") {
  const fs::path out = work_dir() / "dmd_const";
  fs::create_directories(out);
  const fs::path traj = out / "traj.csv";
  {
    std::ofstream f(traj);
    for (int k = 0; k < 12; ++k) f << "1.5,2.5,0.25\n";
  }
  const std::string eig_csv = (out / "eig.csv").string();
  const CmdResult r = run_cli("dmd-analyze --input " + traj.string() +
                              " --rank 1 --snapshots 6 --out " + eig_csv + " --out-dir " +
                              out.string());
  CHECK(r.exit_code == 0);
  std::ifstream in(eig_csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    CHECK(std::stod(cell) == doctest::Approx(1.0).epsilon(1e-9));
    std::getline(ss, cell, ',');
    CHECK(std::stod(cell) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("dmd-analyze with too few rows exits 65") {
  const fs::path out = work_dir() / "dmd_short";
  fs::create_directories(out);
  const fs::path traj = out / "traj.csv";
  {
    std::ofstream f(traj);
    for (int k = 0; k < 5; ++k) f << "1,2,3\n";
  }
  const CmdResult r = run_cli("dmd-analyze --input " + traj.string() +
                              " --rank 1 --snapshots 10 --out-dir " + out.string());
  CHECK(r.exit_code == 65);
}

TEST_CASE("sweep over quadratic checkpoints produces the labeled grid") {
  const fs::path out = work_dir() / "sweep";
  // Train two tiny checkpoints with the filenames sweep expects.
  for (const char* pair : {"1 10", "2 10"}) {
    int rank, snaps;
    std::sscanf(pair, "%d %d", &rank, &snaps);
    const CmdResult t = run_cli(
        "meta-train --task quadratic --rank " + std::to_string(rank) + " --snapshots " +
        std::to_string(snaps) +
        " --epochs 1 --inner-steps 30 --unroll 15 --eval-every 1 --eval-instances 2 "
        "--seed 2 --out-dir " +
        out.string());
    REQUIRE(t.exit_code == 0);
  }
  const CmdResult r = run_cli(
      "sweep --task quadratic --pair 1,10 --pair 2,10 --with-adam --lr 0.05 --steps 30 "
      "--runs 2 --seed 9 --checkpoint-dir " +
      out.string() + " --out-dir " + out.string());
  CHECK(r.exit_code == 0);
  REQUIRE(fs::exists(out / "sweep-quadratic.csv"));
  REQUIRE(fs::exists(out / "sweep-quadratic.svg"));
  const std::string table = slurp(out / "sweep-quadratic.csv");
  CHECK(table.find("L2O-DMD(1,10)") != std::string::npos);
  CHECK(table.find("L2O-DMD(2,10)") != std::string::npos);
  CHECK(table.find("Adam") != std::string::npos);
  const std::string svg = slurp(out / "sweep-quadratic.svg");
  CHECK(svg.find("L2O-DMD(1,10)") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
}

namespace {

void write_be32(std::ofstream& f, uint32_t v) {
  const uint8_t bytes[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                            static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
  f.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_idx_pair(const fs::path& dir, const std::string& prefix, int count, uint64_t seed) {
  fs::create_directories(dir);
  l2o::Rng rng(seed);
  std::ofstream img(dir / (prefix + "-images-idx3-ubyte"), std::ios::binary);
  write_be32(img, 0x803);
  write_be32(img, count);
  write_be32(img, 28);
  write_be32(img, 28);
  for (int i = 0; i < count * 784; ++i) img.put(static_cast<char>(rng.below(256)));
  std::ofstream lab(dir / (prefix + "-labels-idx1-ubyte"), std::ios::binary);
  write_be32(lab, 0x801);
  write_be32(lab, count);
  for (int i = 0; i < count; ++i) lab.put(static_cast<char>(rng.below(10)));
}

}  // namespace

TEST_CASE("mnist-shaped end-to-end smoke: meta-train then evaluate") {
  // Synthetic pixels stand in for the real files; this exercises dataset
  // resolution, the 6370-parameter optimizee, DMD bookkeeping, checkpoint
  // round-trip and both evaluation paths at a tiny step budget.
  const fs::path data = work_dir() / "data";
  write_idx_pair(data / "mnist", "train", 256, 1);
  write_idx_pair(data / "mnist", "t10k", 128, 2);

  const fs::path out = work_dir() / "mnist-smoke";
  const std::string ckpt = (out / "ckpt.json").string();
  const CmdResult train = run_cli(
      "meta-train --task mnist-train --rank 1 --snapshots 100 --epochs 1 --inner-steps 10 "
      "--unroll 5 --eval-every 1 --eval-instances 1 --seed 4 --subset 200 --data-dir " +
      data.string() + " --checkpoint " + ckpt + " --out-dir " + out.string());
  CHECK(train.exit_code == 0);
  REQUIRE(fs::exists(ckpt));

  const CmdResult learned = run_cli(
      "evaluate --task mnist-1l --optimizer l2o-dmd --checkpoint " + ckpt +
      " --steps 12 --runs 1 --seed 5 --data-dir " + data.string() + " --out-dir " +
      (out / "learned").string());
  CHECK(learned.exit_code == 0);
  CHECK(fs::exists(out / "learned" / "trajectory-mnist-1l-l2o-dmd.csv"));

  const CmdResult adam = run_cli(
      "evaluate --task mnist-1l --optimizer adam --steps 12 --runs 2 --seed 5 --data-dir " +
      data.string() + " --out-dir " + (out / "adam").string());
  CHECK(adam.exit_code == 0);
  // Untrained networks on 10 classes start near ln 10.
  const std::string curve = slurp(out / "adam" / "curve-mnist-1l-adam.csv");
  std::stringstream ss(curve);
  std::string header, first;
  std::getline(ss, header);
  std::getline(ss, first);
  const double first_loss = std::stod(first.substr(first.find(',') + 1));
  CHECK(first_loss > 1.8);
  CHECK(first_loss < 2.8);
}

TEST_CASE("config file values are overridden by flags") {
  const fs::path out = work_dir() / "config";
  fs::create_directories(out);
  const fs::path cfg = out / "bench.ini";
  {
    std::ofstream f(cfg);
    f << "[evaluate]\nsteps=25\nruns=2\nseed=4\n";
  }
  // steps comes from the config; runs is overridden on the command line.
  const CmdResult r = run_cli("evaluate --config " + cfg.string() +
                              " --task quadratic --optimizer sgd --lr 0.001 --runs 1 "
                              "--out-dir " +
                              out.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("1 runs, 25 steps") != std::string::npos);
}
