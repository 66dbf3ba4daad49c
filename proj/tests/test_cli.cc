/*
Copyright 2026 The Headforge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>

#include "test_util.h"

using headforge::testing::TempDir;

namespace {

struct Run {
  int status = -1;
  std::string output;  // stdout and stderr
};

Run run(const std::string& args) {
  const std::string cmd = std::string(HEADFORGE_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("pipeline smoke run") {
  TempDir dir("cli");
  const auto scene = dir / "scene", face = dir / "face", depth = dir / "depth",
             assets = dir / "assets";
  REQUIRE(run("synth-model --seed 2 --subdiv 3 -o " + q(dir / "model.p3dm")).status == 0);
  Run r = run("synth-scene --seed 4 --model " + q(dir / "model.p3dm") +
              " --width 64 --height 64 -o " + q(scene));
  REQUIRE_MESSAGE(r.status == 0, r.output);
  CHECK(std::filesystem::exists(scene / "image1.png"));
  CHECK(std::filesystem::exists(scene / "depth2.dpth"));

  for (int view : {1, 2}) {
    r = run("fit-face --scene " + q(scene) + " --view " + std::to_string(view) +
            " --set face_iterations=20 -o " + q(face));
    REQUIRE_MESSAGE(r.status == 0, r.output);
  }
  CHECK(std::filesystem::exists(face / "face1.txt"));
  CHECK(std::filesystem::exists(face / "trace2.csv"));
  CHECK(slurp(face / "trace1.csv").rfind("iteration,photo,lmk,", 0) == 0);

  r = run("fit-depth --scene " + q(scene) + " --face " + q(face) +
          " --set depth_iterations=20 -o " + q(depth));
  REQUIRE_MESSAGE(r.status == 0, r.output);
  CHECK(std::filesystem::exists(depth / "depth1.dpth"));
  CHECK(std::filesystem::exists(depth / "summary.txt"));

  r = run("eval --pred " + q(depth) + " --gt " + q(scene));
  REQUIRE_MESSAGE(r.status == 0, r.output);
  CHECK(r.output.rfind("face ", 0) == 0);

  r = run("render --scene " + q(scene) + " --face " + q(face) + " --depth " + q(depth) +
          " --view 1 -o " + q(assets));
  REQUIRE_MESSAGE(r.status == 0, r.output);
  CHECK(std::filesystem::exists(assets / "composite.png"));

  r = run("rotate --assets " + q(assets) + " --yaw 10 --fill --mask " + q(dir / "hole.png") +
          " -o " + q(dir / "turned.png"));
  REQUIRE_MESSAGE(r.status == 0, r.output);
  CHECK(std::filesystem::exists(dir / "hole.png"));

  r = run("fill --image " + q(dir / "turned.png") + " --mask " + q(dir / "hole.png") + " -o " +
          q(dir / "filled.png"));
  CHECK_MESSAGE(r.status == 0, r.output);
}

TEST_CASE("eval of a bundle against itself prints zeros") {
  TempDir dir("cli_eval");
  REQUIRE(run("synth-scene --seed 1 --subdiv 3 --width 48 --height 48 -o " + q(dir / "s")).status == 0);
  const Run r = run("eval --pred " + q(dir / "s") + " --gt " + q(dir / "s"));
  CHECK(r.status == 0);
  CHECK(r.output == "face 0.000 non-face 0.000\n");
}

TEST_CASE("seeded commands are byte-reproducible") {
  TempDir dir("cli_repro");
  for (const char* name : {"a", "b"}) {
    REQUIRE(run("synth-scene --seed 9 --subdiv 3 --width 48 --height 48 -o " + q(dir / name)).status == 0);
  }
  for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
    CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "b" / e.path().filename().string()),
                  e.path().filename().string());
  }
}

TEST_CASE("gradcheck exits 0") {
  const Run r = run("gradcheck --module losses --seed 1 --size 32 --max-coordinates 40");
  CHECK_MESSAGE(r.status == 0, r.output);
}

TEST_CASE("errors are one line with a code") {
  Run r = run("synth-model --bogus -o x");
  CHECK(r.status == 2);
  CHECK(r.output.rfind("error code=usage ", 0) == 0);
  CHECK(std::count(r.output.begin(), r.output.end(), '\n') == 1);

  r = run("");
  CHECK(r.status == 2);

  TempDir dir("cli_err");
  r = run("eval --pred " + q(dir / "missing") + " --gt " + q(dir / "missing"));
  CHECK(r.status == 1);
  CHECK(r.output.rfind("error code=", 0) == 0);
  CHECK(std::count(r.output.begin(), r.output.end(), '\n') == 1);

  r = run("fit-face --scene " + q(dir / "missing") + " --set not_a_key=1 -o " + q(dir / "o"));
  CHECK(r.status != 0);
  CHECK(r.output.rfind("error code=", 0) == 0);
}
