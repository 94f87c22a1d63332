#include "parkvision/config.hpp"

#include <charconv>
#include <regex>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "parkvision/errors.hpp"
#include "parkvision/image.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace pv {

namespace {

std::string unquote(std::string v) {
  boost::algorithm::trim(v);
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
    v = v.substr(1, v.size() - 2);
  }
  return v;
}

class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : tree_) {
      if (k == key) return unquote(v.data());
    }
    return std::nullopt;
  }
  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v || v->empty()) throw ConfigError(fmt::format("[{}] is missing '{}'", name_, key));
    return *v;
  }
  double number(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v || v->empty()) return fallback;
    try {
      std::size_t used = 0;
      const double d = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing characters");
      return d;
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("[{}] {} = '{}' is not a number", name_, key, *v));
    }
  }
  void allow_only(std::initializer_list<const char*> keys) const {
    for (const auto& [k, _] : tree_) {
      bool known = false;
      for (const char* allowed : keys) known = known || k == allowed;
      if (!known) throw ConfigError(fmt::format("[{}] has unknown key '{}'", name_, k));
    }
  }

 private:
  std::string name_;
  const pt::ptree& tree_;
};

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

std::int64_t parse_int(const std::string& text, const std::string& what) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: '{}' is not an integer", what, text));
  return v;
}

BBox parse_bbox(const std::string& text, const std::string& section) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::algorithm::is_any_of(","));
  if (parts.size() != 4) throw ConfigError(fmt::format("[{}] bbox must be 'x,y,w,h', got '{}'", section, text));
  for (auto& p : parts) boost::algorithm::trim(p);
  const std::string what = fmt::format("[{}] bbox", section);
  return {parse_int(parts[0], what), parse_int(parts[1], what), parse_int(parts[2], what), parse_int(parts[3], what)};
}

}  // namespace

ListenAddress parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw ConfigError(fmt::format("listen address '{}' must be host:port", text));
  }
  const std::int64_t port = parse_int(text.substr(colon + 1), "listen port");
  if (port < 0 || port > 65535) throw ConfigError(fmt::format("listen port {} out of range", port));
  return {text.substr(0, colon), static_cast<int>(port)};
}

AppConfig parse_config(const std::string& text, const fs::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config syntax error at line {}: {}", e.line(), e.message()));
  }

  for (const auto& [name, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(fmt::format("key '{}' appears outside any [section]", name));
    }
  }

  // The ini reader drops sections without keys, so take names from the text.
  static const std::regex kHeader(R"(^\s*\[([^\]]*)\]\s*$)");
  std::vector<std::string> names;
  {
    std::istringstream in(text);
    std::string line;
    std::smatch m;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (std::regex_match(line, m, kHeader)) names.push_back(boost::algorithm::trim_copy(m[1].str()));
    }
  }

  AppConfig cfg;
  const pt::ptree empty;
  for (const std::string& name : names) {
    const auto found = tree.find(name);
    const pt::ptree& body = found == tree.not_found() ? empty : found->second;
    const Section sec(name, body);
    const auto dot = name.find('.');
    const std::string kind = name.substr(0, dot);
    const std::string rest = dot == std::string::npos ? std::string() : name.substr(dot + 1);

    if (name == "server") {
      sec.allow_only({"data_dir", "listen", "admin_token", "static_dir"});
      if (auto v = sec.get("data_dir")) cfg.data_dir = resolve(base_dir, *v);
      if (auto v = sec.get("listen")) cfg.listen = *v;
      if (auto v = sec.get("admin_token")) cfg.admin_token = *v;
      if (auto v = sec.get("static_dir"); v && !v->empty()) cfg.static_dir = resolve(base_dir, *v);
      parse_listen(cfg.listen);
    } else if (name == "detector") {
      sec.allow_only({"model"});
      if (auto v = sec.get("model"); v && !v->empty()) cfg.model_path = resolve(base_dir, *v);
    } else if (kind == "lot" && !rest.empty()) {
      sec.allow_only({"display_name"});
      cfg.lots.push_back({rest, sec.get("display_name").value_or(rest), {}});
    } else if (kind == "camera" && !rest.empty()) {
      sec.allow_only({"lot", "snapshot_url", "poll_interval_s", "timeout_s", "username", "password"});
      CameraConfig cam;
      cam.camera_id = rest;
      cam.lot_id = sec.require("lot");
      cam.snapshot_url = sec.require("snapshot_url");
      cam.poll_interval_s = sec.number("poll_interval_s", 10.0);
      cam.timeout_s = sec.number("timeout_s", 5.0);
      cam.username = sec.get("username").value_or("");
      cam.password = sec.get("password").value_or("");
      try {
        validate(cam);
      } catch (const ValidationError& e) {
        throw ConfigError(e.what());
      }
      cfg.cameras.push_back(std::move(cam));
    } else if (kind == "stall" && !rest.empty()) {
      sec.allow_only({"camera", "bbox"});
      const auto last = rest.rfind('.');
      if (last == std::string::npos || last == 0) {
        throw ConfigError(fmt::format("stall section '{}' must be named [stall.<lot>.<id>]", name));
      }
      StallSeed seed;
      seed.lot_id = rest.substr(0, last);
      seed.stall_id = parse_int(rest.substr(last + 1), fmt::format("[{}] stall id", name));
      seed.camera_id = sec.require("camera");
      seed.bbox = parse_bbox(sec.require("bbox"), name);
      if (!seed.bbox.valid()) throw ConfigError(fmt::format("[{}] bbox must have x,y >= 0 and w,h > 0", name));
      cfg.stalls.push_back(std::move(seed));
    } else {
      throw ConfigError(fmt::format("unknown config section [{}]", name));
    }
  }

  for (const auto& cam : cfg.cameras) {
    bool found = false;
    for (const auto& lot : cfg.lots) found = found || lot.lot_id == cam.lot_id;
    if (!found) throw ConfigError(fmt::format("camera '{}' refers to undeclared lot '{}'", cam.camera_id, cam.lot_id));
  }
  return cfg;
}

AppConfig load_config(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  return parse_config(std::string(bytes.begin(), bytes.end()), base);
}

void apply_config(const AppConfig& config, Registry& registry) {
  for (const auto& lot : config.lots) registry.upsert_lot(lot);
  for (const auto& cam : config.cameras) registry.upsert_camera(cam);
  for (const auto& s : config.stalls) registry.upsert_stall(s.lot_id, s.stall_id, s.bbox, s.camera_id);
}

}  // namespace pv
