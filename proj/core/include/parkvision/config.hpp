#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "parkvision/registry.hpp"

namespace pv {

struct StallSeed {
  std::string lot_id;
  std::int64_t stall_id = 0;
  std::string camera_id;
  BBox bbox;
};

// Contents of the service configuration file (INI/TOML-style sections):
//
//   [server]          data_dir, listen, admin_token, static_dir
//   [detector]        model
//   [lot.<id>]        display_name
//   [camera.<id>]     lot, snapshot_url, poll_interval_s, timeout_s, username, password
//   [stall.<lot>.<n>] camera, bbox = "x,y,w,h"
struct AppConfig {
  std::filesystem::path data_dir = "./parkvision-data";
  std::string listen = "127.0.0.1:8080";
  std::string admin_token;
  std::optional<std::filesystem::path> static_dir;
  std::optional<std::filesystem::path> model_path;
  std::vector<LotRecord> lots;
  std::vector<CameraConfig> cameras;
  std::vector<StallSeed> stalls;

  std::filesystem::path database_path() const { return data_dir / "registry.sqlite3"; }
};

// Relative paths are resolved against the config file's directory.
AppConfig load_config(const std::filesystem::path& path);
AppConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");

// Writes lots, cameras and seeded stalls into the registry (idempotent).
void apply_config(const AppConfig& config, Registry& registry);

struct ListenAddress {
  std::string host;
  int port = 0;
};
ListenAddress parse_listen(const std::string& text);

}  // namespace pv
