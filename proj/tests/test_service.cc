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

#include <fstream>
#include <thread>

#include "headforge/io.h"
#include "headforge/scene.h"
#include "headforge/service.h"
#include "httplib.h"
#include "json.hpp"
#include "test_util.h"

using namespace headforge;
using testing::TempDir;

namespace {

// Builds an asset bundle from a generated scene once per process.
const std::filesystem::path& bundle() {
  static TempDir dir("service_assets");
  static const bool built = [] {
    SceneSpec spec;
    spec.seed = 2;
    spec.width = spec.height = 64;
    const HeadScene s = synth_scene(spec);
    const SceneView& v = s.views[0];
    const FaceParameters p{s.coefficients, v.pose, s.lighting};
    save_assets(assemble_assets(s.model, p, v.image, v.depth, v.masks, s.camera, &s.background),
                dir.path());
    return true;
  }();
  (void)built;
  return dir.path();
}

std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    out[e.path().filename().string()] =
        std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

class Running {
 public:
  Running(const std::filesystem::path& assets, const std::filesystem::path& ui)
      : service_(assets, ui) {
    port_ = service_.bind("127.0.0.1", 0);
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { service_.listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(60, 0);
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }
  httplib::Client& client() { return *client_; }
  HeadService& service() { return service_; }

 private:
  HeadService service_;
  int port_ = -1;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

Image decode(const std::string& body, const TempDir& tmp, KeyValues* text = nullptr) {
  const auto path = tmp / "body.png";
  std::ofstream(path, std::ios::binary) << body;
  if (text) *text = read_png_text(path);
  return read_png(path);
}

Mask decode_mask(const std::string& body, const TempDir& tmp) {
  const auto path = tmp / "mask.png";
  std::ofstream(path, std::ios::binary) << body;
  return read_mask_png(path);
}

}  // namespace

TEST_CASE("parse_pose_request") {
  const PoseRequest r = parse_pose_request(R"({"yaw": 10, "tz": -5.5, "fill": true})");
  CHECK(r.yaw == 10.0);
  CHECK(r.tz == -5.5);
  CHECK(r.pitch == 0.0);
  CHECK(r.fill);
  CHECK(parse_pose_request("{}").delta().quaternion == Eigen::Vector4d(1, 0, 0, 0));
  CHECK_ERROR_CODE(parse_pose_request("{yaw: 1"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(parse_pose_request("[1, 2]"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(parse_pose_request(R"({"yaw": "ten"})"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(parse_pose_request(R"({"scale": 2})"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(parse_pose_request(R"({"fill": 1})"), ErrorCode::kInvalidArgument);
}

TEST_CASE("HTTP endpoints") {
  TempDir ui("ui");
  std::ofstream(ui / "index.html") << "<html>pose editor</html>";
  const auto before = snapshot(bundle());
  const HeadAssets assets = load_assets(bundle());
  const Manipulation identity = manipulate_pose(assets, Pose());
  TempDir tmp("service_bodies");
  Running server(bundle(), ui.path());
  REQUIRE(server.service().assets_loaded());
  httplib::Client& c = server.client();

  SUBCASE("GET /head describes the bundle") {
    auto res = c.Get("/head");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto j = nlohmann::json::parse(res->body);
    CHECK(j["camera"]["width"] == 64);
    CHECK(j["face_vertices"].get<long>() == assets.face.vertices.cols());
    CHECK(j["head_pixels"].get<size_t>() == count(assets.masks.S));
    CHECK(j["pose"]["translation"][2].get<double>() == doctest::Approx(assets.pose.translation.z()));
    CHECK(j["gamma"].size() == 9);
  }
  SUBCASE("POST /render at the identity is the composite") {
    auto res = c.Post("/render", "{}", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "image/png");
    KeyValues text;
    const Image img = decode(res->body, tmp, &text);
    for (size_t i = 0; i < img.size(); ++i) {
      REQUIRE((img[i] - identity.image[i]).cwiseAbs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);
    }
    CHECK(text["hole_pixels"] == std::to_string(count(identity.hole)));
  }
  SUBCASE("render is stateless: +10 then 0 returns the identity image") {
    auto first = c.Post("/render", "{}", "application/json");
    auto turned = c.Post("/render", R"({"yaw": 10})", "application/json");
    auto back = c.Post("/render", R"({"yaw": 0})", "application/json");
    REQUIRE((first && turned && back));
    CHECK(turned->status == 200);
    CHECK(turned->body != first->body);
    CHECK(back->body == first->body);
  }
  SUBCASE("fill replaces the hole and is marked") {
    auto res = c.Post("/render", R"({"yaw": 15, "fill": true})", "application/json");
    REQUIRE(res);
    KeyValues text;
    decode(res->body, tmp, &text);
    CHECK(text["filled"] == "harmonic");
    CHECK(std::stoul(text["hole_pixels"]) > 0);
  }
  SUBCASE("GET /mask") {
    const std::string pose = R"({"yaw":15})";
    auto res = c.Get("/mask?pose=" + httplib::detail::encode_url(pose));
    REQUIRE(res);
    CHECK(res->status == 200);
    const Mask m = decode_mask(res->body, tmp);
    CHECK(m == manipulate_pose(assets, parse_pose_request(pose).delta()).hole);
    auto plain = c.Get("/mask");
    REQUIRE(plain);
    CHECK(decode_mask(plain->body, tmp) == identity.hole);
  }
  SUBCASE("bad requests") {
    auto bad = c.Post("/render", "{yaw", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(nlohmann::json::parse(bad->body)["error"] == "invalid_argument");
    auto unknown = c.Get("/mask?pose=" + httplib::detail::encode_url(R"({"zoom":2})"));
    REQUIRE(unknown);
    CHECK(unknown->status == 400);
    auto behind = c.Post("/render", R"({"tz": -100000})", "application/json");
    REQUIRE(behind);
    CHECK(behind->status == 422);
  }
  SUBCASE("static UI") {
    auto res = c.Get("/ui/index.html");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "<html>pose editor</html>");
    auto missing = c.Get("/ui/nope.js");
    REQUIRE(missing);
    CHECK(missing->status == 404);
  }
  CHECK(snapshot(bundle()) == before);
}

TEST_CASE("a missing bundle answers 404 but keeps serving the UI") {
  TempDir empty("no_assets"), ui("ui2");
  std::ofstream(ui / "index.html") << "ok";
  Running server(empty / "absent", ui.path());
  CHECK_FALSE(server.service().assets_loaded());
  for (const char* path : {"/head", "/mask"}) {
    auto res = server.client().Get(path);
    REQUIRE(res);
    CHECK(res->status == 404);
    CHECK(nlohmann::json::parse(res->body)["error"] == "assets_missing");
  }
  auto post = server.client().Post("/render", "{}", "application/json");
  REQUIRE(post);
  CHECK(post->status == 404);
  auto page = server.client().Get("/ui/index.html");
  REQUIRE(page);
  CHECK(page->body == "ok");
}
