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

// Local HTTP service rendering the head at a requested pose.
//
//   GET  /head            assets metadata (JSON)
//   POST /render          pose JSON -> PNG of the manipulated portrait
//   GET  /mask?pose=JSON  hole mask PNG for that pose
//   GET  /ui/...          static files
//
// A pose request is {"yaw", "pitch", "roll"} in degrees and {"tx", "ty",
// "tz"} in mm, all optional and zero by default. The angles compose as
// R = Rz(roll) Ry(yaw) Rx(pitch) about the head centre, in camera axes, and
// are applied relative to the source pose. "fill": true replaces hole
// pixels with the harmonic fill.

#ifndef HEADFORGE_SERVICE_H_
#define HEADFORGE_SERVICE_H_

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "headforge/manipulate.h"

namespace headforge {

struct PoseRequest {
  double yaw = 0.0, pitch = 0.0, roll = 0.0;  // degrees
  double tx = 0.0, ty = 0.0, tz = 0.0;        // mm
  bool fill = false;

  Pose delta() const;
};

// Throws Error(kInvalidArgument) on malformed JSON, unknown keys or
// non-finite values.
PoseRequest parse_pose_request(const std::string& json);

// Metadata JSON for GET /head.
std::string head_metadata_json(const HeadAssets& assets);

class HeadService {
 public:
  // A bundle that fails to load leaves the service up; the asset endpoints
  // then answer 404.
  HeadService(const std::filesystem::path& assets_dir, const std::filesystem::path& ui_dir);
  ~HeadService();
  HeadService(const HeadService&) = delete;
  HeadService& operator=(const HeadService&) = delete;

  bool assets_loaded() const { return assets_.has_value(); }
  const std::string& load_error() const { return load_error_; }

  // Binds |host|:|port| (0 picks a free port) and returns the bound port, or
  // -1 on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen();
  void stop();

 private:
  struct Server;
  std::optional<HeadAssets> assets_;
  std::string load_error_;
  std::unique_ptr<Server> server_;
};

}  // namespace headforge

#endif  // HEADFORGE_SERVICE_H_
