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

// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Usage: acceptance [--only N] [--work DIR]

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdarg>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "headforge/fit.h"
#include "headforge/gradcheck.h"
#include "headforge/manipulate.h"
#include "headforge/scene.h"

namespace fs = std::filesystem;
using namespace headforge;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

HeadScene scene_for(std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  return synth_scene(spec);
}

DepthView view_of(const SceneView& v) { return {v.image, v.masks, v.face_depth, v.pose}; }

// 1. Gradient suite at 64x64, library and CLI.
Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  GradcheckOptions opt;
  opt.size = 64;
  bool all = true;
  for (const LossCheck& c : run_loss_gradchecks(opt)) {
    all = all && c.passed;
    o.details.push_back(fmt("%-22s %s pass %.3f excluded %.3f worst %.2e", c.name.c_str(),
                            c.passed ? "ok" : "FAILED", c.check.pass_fraction(),
                            c.check.excluded_fraction(), c.check.worst_relative_error));
  }
  const double secs = seconds_since(t0);
  const auto t1 = Clock::now();
  const int status = std::system((std::string(HEADFORGE_CLI) +
                                  " gradcheck --module losses --size 64 > /dev/null").c_str());
  const bool cli_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  const double cli_secs = seconds_since(t1);
  o.pass = all && cli_ok && secs < 120.0 && cli_secs < 120.0;
  o.summary = fmt("all losses >= 95%% within 1e-3: %s, gradcheck exit %s, %.1fs (limit 120s)",
                  all ? "yes" : "no", cli_ok ? "0" : "nonzero", std::max(secs, cli_secs));
  return o;
}

// 2. Face stage from a perturbed start.
Outcome face_recovery() {
  Outcome o;
  bool all = true;
  double worst_ratio = 0.0, worst_lmk = 0.0, worst_secs = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HeadScene s = scene_for(seed);
    const SceneView& v = s.views[0];
    const FaceParameters truth{s.coefficients, v.pose, s.lighting};
    const FaceParameters init = perturb_face_parameters(truth, s.model, 1000 + seed);
    FitConfig cfg;
    cfg.face_iterations = 8000;
    cfg.patience = 100000;
    const FaceObservation obs{v.image, v.masks.S_f, v.landmarks, s.camera};
    const auto t0 = Clock::now();
    const FaceFitResult r = fit_face(s.model, obs, cfg, init);
    const double secs = seconds_since(t0);
    const Eigen::Matrix3Xd fitted = apply_pose(
        evaluate_shape(s.model, r.params.coefficients.alpha, r.params.coefficients.beta), r.params.pose);
    const Eigen::Matrix3Xd gt = apply_pose(
        evaluate_shape(s.model, s.coefficients.alpha, s.coefficients.beta), v.pose);
    const double diag = (gt.rowwise().maxCoeff() - gt.rowwise().minCoeff()).norm();
    const double err = (fitted - gt).colwise().norm().mean();
    const bool ok = err < 0.01 * diag && r.terms.lmk < 1.0 && secs < 60.0 && !r.aborted;
    all = all && ok;
    worst_ratio = std::max(worst_ratio, err / diag);
    worst_lmk = std::max(worst_lmk, r.terms.lmk);
    worst_secs = std::max(worst_secs, secs);
    o.details.push_back(fmt("seed %d: vertex error %.3f mm (limit %.3f), landmark %.4f px^2, %.1fs",
                            static_cast<int>(seed), err, 0.01 * diag, r.terms.lmk, secs));
  }
  o.pass = all;
  o.summary = fmt("worst vertex error %.3f%% of diagonal (limit 1%%), landmark %.4f px^2 (limit 1), "
                  "%.1fs (limit 60s)",
                  100.0 * worst_ratio, worst_lmk, worst_secs);
  return o;
}

// 3. Depth stage on co-visible hair, with and without d^f conditioning.
Outcome depth_recovery() {
  Outcome o;
  bool all = true;
  double worst = 0.0;
  int ablation_worse = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HeadScene s = scene_for(seed);
    double mean = 0.0;
    size_t nm = 0;
    for (int k = 0; k < 2; ++k) {
      for (size_t i = 0; i < s.views[k].depth.size(); ++i) {
        if (s.views[k].masks.S[i]) {
          mean += s.views[k].depth[i];
          ++nm;
        }
      }
    }
    mean /= static_cast<double>(nm);
    double mae[2];
    for (int conditioned = 1; conditioned >= 0; --conditioned) {
      FitConfig cfg;
      cfg.condition_on_face_depth = conditioned != 0;
      const DepthFitResult r = fit_depth_pair(view_of(s.views[0]), view_of(s.views[1]), s.camera, cfg);
      double sum = 0.0;
      size_t n = 0;
      for (int k = 0; k < 2; ++k) {
        const DepthMap& d = k ? r.depth2 : r.depth1;
        for (size_t i = 0; i < d.size(); ++i) {
          if (!s.views[k].covisible[i]) continue;
          sum += std::abs(d[i] - s.views[k].depth[i]);
          ++n;
        }
      }
      mae[conditioned] = sum / static_cast<double>(n);
    }
    const bool ok = mae[1] < 0.02 * mean && mae[0] > mae[1];
    if (mae[0] > mae[1]) ++ablation_worse;
    all = all && ok;
    worst = std::max(worst, mae[1] / mean);
    o.details.push_back(fmt("seed %d: MAE %.2f mm (limit %.2f), without d^f %.2f mm",
                            static_cast<int>(seed), mae[1], 0.02 * mean, mae[0]));
  }
  o.pass = all;
  o.summary = fmt("worst MAE %.3f%% of mean depth (limit 2%%), ablation worse on %d/5 scenes",
                  100.0 * worst, ablation_worse);
  return o;
}

// 4. Constructed layer violations.
Outcome layer_order() {
  Outcome o;
  const HeadScene s = scene_for(7);
  DepthMap init[2];
  size_t before = 0;
  for (int k = 0; k < 2; ++k) {
    const SceneView& v = s.views[k];
    init[k] = init_depth(v.face_depth, v.masks).depth;
    for (size_t i = 0; i < init[k].size(); ++i) {
      if (v.masks.S_h[i] && v.masks.F[i]) init[k][i] = v.face_depth[i] + 15.0;
    }
    before += count_layer_violations(init[k], v.face_depth, v.masks);
  }
  const DepthFitResult r = fit_depth_pair(view_of(s.views[0]), view_of(s.views[1]), s.camera,
                                          FitConfig(), &init[0], &init[1]);
  const size_t after = count_layer_violations(r.depth1, s.views[0].face_depth, s.views[0].masks) +
                       count_layer_violations(r.depth2, s.views[1].face_depth, s.views[1].masks);
  o.pass = before > 0 && after == 0;
  o.summary = fmt("violating pixels %zu before, %zu after (limit 0)", before, after);
  return o;
}

// 5. Exact zeros.
Outcome trivial_zeros() {
  Outcome o;
  SceneSpec spec;
  spec.seed = 1;
  spec.width = spec.height = 64;
  const HeadScene s = synth_scene(spec);
  const SceneView& v = s.views[0];

  const double photo = photometric_loss(v.image, v.image, v.masks.S_f).value;

  DepthMap affine(64, 64, kUndefinedDepth);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) affine.at(x, y) = 1000.0 + 0.5 * x - 0.25 * y;
  }
  const double smooth = smoothness_loss(affine, v.masks.S).value;

  // Colours on a 1/256 grid so that the offset is represented exactly.
  Image a = v.image, b = v.image;
  for (size_t i = 0; i < a.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      a[i][c] = std::round(a[i][c] * 192.0f) / 256.0f;
      b[i][c] = a[i][c] + 0.125f;
    }
  }
  const double grad = gradient_loss(a, b, v.depth, v.depth, v.pose, v.pose, s.camera, v.masks.H,
                                    v.masks.H).value;

  DepthMap front = v.depth;
  for (size_t i = 0; i < front.size(); ++i) {
    if (v.masks.S_h[i] && v.masks.F[i]) front[i] = v.face_depth[i] - 5.0;
  }
  const double layer = layer_order_loss(front, v.face_depth, v.masks).value;

  o.pass = photo == 0.0 && smooth == 0.0 && grad == 0.0 && layer == 0.0;
  o.summary = fmt("l_photo(I,I)=%g l_smooth(affine)=%g l_grad(offset)=%g l_layer(front)=%g", photo,
                  smooth, grad, layer);
  return o;
}

double mae(const Image& a, const Image& b, const Mask& m) {
  double s = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!m[i]) continue;
    s += (a[i] - b[i]).cast<double>().cwiseAbs().sum() / 3.0;
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

// 6. +10/-10 yaw round trip and background preservation.
Outcome round_trip() {
  Outcome o;
  bool all = true;
  double worst = 0.0;
  size_t changed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HeadScene s = scene_for(seed);
    const SceneView& v = s.views[0];
    const FaceParameters p{s.coefficients, v.pose, s.lighting};
    const HeadAssets assets =
        assemble_assets(s.model, p, v.image, v.depth, v.masks, s.camera, &s.background);
    const Pose there = delta_from_euler(10.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    const Manipulation m1 = manipulate_pose(assets, there);
    const Manipulation m2 =
        manipulate_pose(reassemble(assets, there, m1), delta_from_euler(-10.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    const double err = mae(m2.image, v.image, mask_and(v.masks.S, m2.coverage));
    size_t seed_changed = 0;
    for (const Manipulation* m : {&m1, &m2}) {
      const Mask touched = mask_or(mask_or(assets.masks.S, m->coverage), m->hole);
      for (size_t i = 0; i < m->image.size(); ++i) {
        if (!touched[i] && std::memcmp(&m->image[i], &assets.plate[i], sizeof(Rgb)) != 0) {
          ++seed_changed;
        }
      }
    }
    changed += seed_changed;
    all = all && err < 4.0 / 255.0 && seed_changed == 0;
    worst = std::max(worst, err);
    o.details.push_back(fmt("seed %d: round trip MAE %.3f/255, background pixels changed %zu",
                            static_cast<int>(seed), 255.0 * err, seed_changed));
  }
  o.pass = all;
  o.summary = fmt("worst MAE %.3f/255 (limit 4/255), background pixels changed %zu (limit 0)",
                  255.0 * worst, changed);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Runs the CLI with |args| (where "@" expands to |root|) and returns the
// exit status and stdout.
std::pair<int, std::string> run_cli(const std::string& args, const fs::path& root) {
  std::string expanded;
  for (char c : args) expanded += c == '@' ? root.string() : std::string(1, c);
  const std::string cmd = std::string(HEADFORGE_CLI) + " " + expanded + " 2>/dev/null";
  std::string out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, out};
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
  const int raw = ::pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

// 7. Every seeded command, twice.
Outcome determinism(const fs::path& work) {
  Outcome o;
  const std::vector<std::string> commands = {
      "synth-model --seed 3 --subdiv 3 -o @/model.p3dm",
      "synth-scene --seed 3 --model @/model.p3dm --width 64 --height 64 -o @/scene",
      "fit-face --scene @/scene --view 1 --init perturbed --seed 5 --set face_iterations=60 -o @/face",
      "fit-face --scene @/scene --view 2 --init perturbed --seed 5 --set face_iterations=60 -o @/face",
      "fit-depth --scene @/scene --face @/face --set depth_iterations=60 -o @/depth",
      "fit-depth --scene @/scene --face @/face --ablate --set depth_iterations=60 -o @/ablated",
      "fit-depth-single --scene @/scene --face @/face --view 1 -o @/single",
      "render --scene @/scene --face @/face --depth @/depth --view 1 -o @/assets",
      "rotate --assets @/assets --yaw 10 --fill --mask @/hole.png -o @/turned.png",
      "fill --image @/turned.png --mask @/hole.png -o @/filled.png",
      "eval --pred @/depth --gt @/scene",
      "gradcheck --module losses --seed 2 --size 32 --max-coordinates 50",
  };
  std::map<std::string, std::string> outputs[2];
  bool ran = true;
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path root = work / (pass ? "b" : "a");
    fs::remove_all(root);
    fs::create_directories(root);
    for (size_t c = 0; c < commands.size(); ++c) {
      const auto [status, out] = run_cli(commands[c], root);
      if (status != 0) {
        ran = false;
        o.details.push_back(fmt("exit %d: %s", status, commands[c].c_str()));
      }
      // Output paths are the one intended difference between the passes.
      std::string normalized = out;
      for (size_t at; (at = normalized.find(root.string())) != std::string::npos;) {
        normalized.replace(at, root.string().size(), "@");
      }
      outputs[pass]["stdout " + std::to_string(c)] = normalized;
    }
    for (auto& [name, bytes] : tree(root)) outputs[pass][name] = std::move(bytes);
  }
  size_t differing = 0;
  for (const auto& [name, bytes] : outputs[0]) {
    const auto it = outputs[1].find(name);
    if (it == outputs[1].end() || it->second != bytes) {
      ++differing;
      o.details.push_back("differs: " + name);
    }
  }
  o.pass = ran && differing == 0 && outputs[0].size() == outputs[1].size();
  o.summary = fmt("%zu commands, %zu outputs compared, %zu differ", commands.size(),
                  outputs[0].size(), differing);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  fs::path work = fs::temp_directory_path() / "headforge_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only N] [--work DIR]\n");
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradients},
      {"face-stage recovery", face_recovery},
      {"depth-stage recovery", depth_recovery},
      {"layer order", layer_order},
      {"trivial zeros", trivial_zeros},
      {"manipulation round trip", round_trip},
      {"determinism", [&] { return determinism(work); }},
  };
  bool all = true;
  for (size_t k = 0; k < criteria.size(); ++k) {
    if (only && static_cast<int>(k + 1) != only) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("exception: ") + e.what();
    }
    std::printf("criterion %zu %s: %s  %s (%.1fs)\n", k + 1, criteria[k].first.c_str(),
                o.pass ? "PASS" : "FAIL", o.summary.c_str(), seconds_since(t0));
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  fs::remove_all(work);
  return all ? 0 : 1;
}
