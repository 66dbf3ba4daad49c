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

#include "headforge/service.h"

#include <cmath>
#include <cstdio>

#include "headforge/error.h"
#include "headforge/io.h"
#include "httplib.h"
#include "json.hpp"

namespace headforge {

using nlohmann::json;

Pose PoseRequest::delta() const { return delta_from_euler(yaw, pitch, roll, tx, ty, tz); }

PoseRequest parse_pose_request(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed pose JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "pose JSON must be an object");
  PoseRequest r;
  for (const auto& [key, value] : j.items()) {
    double* field = nullptr;
    if (key == "yaw") field = &r.yaw;
    else if (key == "pitch") field = &r.pitch;
    else if (key == "roll") field = &r.roll;
    else if (key == "tx") field = &r.tx;
    else if (key == "ty") field = &r.ty;
    else if (key == "tz") field = &r.tz;
    if (field) {
      if (!value.is_number() || !std::isfinite(value.get<double>())) {
        throw Error(ErrorCode::kInvalidArgument, "pose field '" + key + "' must be a finite number");
      }
      *field = value.get<double>();
    } else if (key == "fill") {
      if (!value.is_boolean()) throw Error(ErrorCode::kInvalidArgument, "'fill' must be a boolean");
      r.fill = value.get<bool>();
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown pose field '" + key + "'");
    }
  }
  return r;
}

std::string head_metadata_json(const HeadAssets& a) {
  json j;
  j["pose"] = {{"quaternion", {a.pose.quaternion[0], a.pose.quaternion[1], a.pose.quaternion[2],
                               a.pose.quaternion[3]}},
               {"translation", {a.pose.translation[0], a.pose.translation[1], a.pose.translation[2]}}};
  j["gamma"] = std::vector<double>(a.lighting.gamma.data(), a.lighting.gamma.data() + 9);
  j["camera"] = {{"focal", a.camera.focal},
                 {"principal_point", {a.camera.principal_point[0], a.camera.principal_point[1]}},
                 {"width", a.camera.width},
                 {"height", a.camera.height}};
  j["head_centre"] = {a.head_centre[0], a.head_centre[1], a.head_centre[2]};
  j["face_vertices"] = a.face.vertices.cols();
  j["hair_vertices"] = a.hair.vertices.cols();
  j["head_pixels"] = count(a.masks.S);
  return j.dump();
}

struct HeadService::Server {
  httplib::Server http;
};

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
}

int status_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kConfig:
      return 400;
    case ErrorCode::kBehindCamera:
    case ErrorCode::kEmptyRegion:
      return 422;
    default:
      return 500;
  }
}

std::string body_png(const std::vector<std::uint8_t>& bytes) {
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

}  // namespace

HeadService::HeadService(const std::filesystem::path& assets_dir,
                         const std::filesystem::path& ui_dir)
    : server_(std::make_unique<Server>()) {
  try {
    assets_ = load_assets(assets_dir);
  } catch (const Error& e) {
    load_error_ = e.what();
  }
  httplib::Server& http = server_->http;

  // Wraps an asset endpoint: 404 without assets, mapped library errors.
  auto with_assets = [this](auto handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      if (!assets_) {
        send_error(res, 404, "assets_missing", load_error_);
        return;
      }
      try {
        handler(*assets_, req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e), error_code_name(e.code()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  };

  http.Get("/head", with_assets([](const HeadAssets& a, const httplib::Request&, httplib::Response& res) {
    res.set_content(head_metadata_json(a), "application/json");
  }));

  http.Post("/render", with_assets([](const HeadAssets& a, const httplib::Request& req,
                                      httplib::Response& res) {
    const PoseRequest pose = parse_pose_request(req.body.empty() ? "{}" : req.body);
    Manipulation m = manipulate_pose(a, pose.delta());
    KeyValues text;
    text["hole_pixels"] = std::to_string(count(m.hole));
    if (pose.fill) {
      m.image = fill_holes(m.image, m.hole);
      text["filled"] = "harmonic";
    }
    res.set_header("X-Hole-Pixels", text["hole_pixels"]);
    res.set_content(body_png(encode_png(m.image, &text)), "image/png");
  }));

  http.Get("/mask", with_assets([](const HeadAssets& a, const httplib::Request& req,
                                   httplib::Response& res) {
    const std::string text = req.has_param("pose") ? req.get_param_value("pose") : "{}";
    const PoseRequest pose = parse_pose_request(text);
    const Manipulation m = manipulate_pose(a, pose.delta());
    res.set_header("X-Hole-Pixels", std::to_string(count(m.hole)));
    res.set_content(body_png(encode_png(m.hole)), "image/png");
  }));

  if (!ui_dir.empty() && std::filesystem::is_directory(ui_dir)) {
    http.set_mount_point("/ui", ui_dir.string());
  }
}

HeadService::~HeadService() { stop(); }

int HeadService::bind(const std::string& host, int port) {
  if (port == 0) return server_->http.bind_to_any_port(host);
  return server_->http.bind_to_port(host, port) ? port : -1;
}

bool HeadService::listen() { return server_->http.listen_after_bind(); }

void HeadService::stop() {
  if (server_) server_->http.stop();
}

}  // namespace headforge
