// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include <doctest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "cdflow/cdflow.h"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "cdflow_cli_test";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run cli(const std::string& args) {
  const std::string out = (kWork / "stdout.txt").string(), err = (kWork / "stderr.txt").string();
  const std::string cmd = "cd '" + kWork.string() + "' && '" CDFLOW_CLI_PATH "' " + args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

double kv_value(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size() + 1));
}

std::vector<std::pair<std::string, std::string>> dir_contents(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::directory_iterator(dir)) files.emplace_back(e.path().filename().string(), slurp(e.path()));
  std::sort(files.begin(), files.end());
  return files;
}

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  ~Workspace() { fs::remove_all(kWork); }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  Workspace ws;
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("baseline --manifest x.csv").code == 2);
  CHECK(cli("baseline --formula E1976 --manifest x.csv").code == 2);
  CHECK(cli("gen-synth --n abc --out d").code == 2);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("runtime errors exit with 1 and a message") {
  Workspace ws;
  const Run r = cli("baseline --formula E76 --manifest missing.csv");
  CHECK(r.code == 1);
  CHECK(r.err.find("missing.csv") != std::string::npos);
}

TEST_CASE("end-to-end: synthesize, baseline, train, evaluate, compare") {
  Workspace ws;
  REQUIRE(cli("gen-synth --n 12 --size 8 --seed 3 --out syn").code == 0);
  CHECK(fs::exists(kWork / "syn" / "manifest.csv"));

  // The labels were produced by the same formula on the written pixels.
  const Run base = cli("baseline --formula E2000 --manifest syn/manifest.csv --report base.txt");
  REQUIRE(base.code == 0);
  CHECK(kv_value(slurp(kWork / "base.txt"), "stress") <= 1e-6);
  CHECK(kv_value(slurp(kWork / "base.txt"), "srcc") == doctest::Approx(1.0));

  const std::string train_args =
      "train --manifest syn/manifest.csv -K 2 -L 1 --hidden 4 --epochs 2 --lr 1e-3 --seed 9 --out ";
  REQUIRE(cli(train_args + "m1.ckpt --loss-log l1.csv").code == 0);
  REQUIRE(cli(train_args + "m2.ckpt --loss-log l2.csv").code == 0);
  CHECK(slurp(kWork / "m1.ckpt") == slurp(kWork / "m2.ckpt"));
  CHECK(slurp(kWork / "l1.csv") == slurp(kWork / "l2.csv"));
  CHECK(slurp(kWork / "l1.csv").rfind("epoch,batch,loss_ms,loss_nl,total\n", 0) == 0);

  const Run same = cli("compare --checkpoint m1.ckpt syn/pair_00000_a.png syn/pair_00000_a.png");
  REQUIRE(same.code == 0);
  CHECK(kv_value(same.out, "delta_e") == 0.0);

  REQUIRE(cli("compare --checkpoint m1.ckpt syn/pair_00001_a.png syn/pair_00001_b.png --maps maps1 --heat").code == 0);
  REQUIRE(cli("compare --checkpoint m1.ckpt syn/pair_00001_a.png syn/pair_00001_b.png --maps maps2 --heat").code == 0);
  CHECK(dir_contents(kWork / "maps1").size() == 6);
  CHECK(dir_contents(kWork / "maps1") == dir_contents(kWork / "maps2"));

  REQUIRE(cli("eval --checkpoint m1.ckpt --manifest syn/manifest.csv --report e1.txt").code == 0);
  REQUIRE(cli("eval --checkpoint m1.ckpt --manifest syn/manifest.csv --report e2.txt").code == 0);
  CHECK(slurp(kWork / "e1.txt") == slurp(kWork / "e2.txt"));

  const std::string de = "distort-eval --checkpoint m1.ckpt --manifest syn/manifest.csv --kind translate --seed 4 ";
  REQUIRE(cli(de + "--report d1.txt").code == 0);
  REQUIRE(cli(de + "--report d2.txt").code == 0);
  CHECK(slurp(kWork / "d1.txt") == slurp(kWork / "d2.txt"));
  CHECK(slurp(kWork / "d1.txt").find("CD-Flow+translate") != std::string::npos);

  REQUIRE(cli("gen-synth --n 12 --size 8 --seed 3 --out syn2").code == 0);
  CHECK(dir_contents(kWork / "syn") == dir_contents(kWork / "syn2"));

  CHECK(cli("eval --checkpoint m1.ckpt --manifest nowhere.csv").code == 1);
  CHECK(cli("compare --checkpoint m1.ckpt syn/pair_00000_a.png nothere.png").code == 1);
}

TEST_CASE("indivisible images need --center-crop") {
  Workspace ws;
  fs::create_directories(kWork / "odd");
  std::vector<double> rgb(10 * 10 * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<double>(i % 97) / 96.0;
  std::ofstream manifest(kWork / "odd" / "manifest.csv");
  for (int i = 0; i < 6; ++i) {
    cdflow_image *a = nullptr, *b = nullptr;
    for (double& v : rgb) v = std::fmod(v + 0.37, 1.0);
    REQUIRE(cdflow_image_from_rgb(rgb.data(), 10, 10, &a) == CDFLOW_OK);
    for (double& v : rgb) v = std::fmod(v + 0.011 * (i + 1), 1.0);
    REQUIRE(cdflow_image_from_rgb(rgb.data(), 10, 10, &b) == CDFLOW_OK);
    const std::string na = "a" + std::to_string(i) + ".ppm", nb = "b" + std::to_string(i) + ".ppm";
    REQUIRE(cdflow_image_save(a, (kWork / "odd" / na).string().c_str()) == CDFLOW_OK);
    REQUIRE(cdflow_image_save(b, (kWork / "odd" / nb).string().c_str()) == CDFLOW_OK);
    manifest << na << "," << nb << "," << 0.5 * (i + 1) << "\n";
    cdflow_image_free(a);
    cdflow_image_free(b);
  }
  manifest.close();

  const std::string args = "train --manifest odd/manifest.csv -K 2 -L 1 --hidden 4 --epochs 1 --out m.ckpt";
  const Run plain = cli(args);
  CHECK(plain.code == 1);
  CHECK(plain.err.find("--center-crop") != std::string::npos);
  const Run cropped = cli(args + " --center-crop");
  CHECK(cropped.code == 0);
  CHECK(cropped.err.find("8x8") != std::string::npos);
}
