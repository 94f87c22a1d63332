#include "parkvision/web.hpp"

#include <mutex>
#include <charconv>
#include <cmath>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "parkvision/errors.hpp"
#include "parkvision/time_util.hpp"

namespace pv {

using nlohmann::json;

namespace {

ApiResponse ok_json(const json& body, int status = 200) {
  ApiResponse r;
  r.status = status;
  r.body = body.dump();
  return r;
}

json bbox_json(const BBox& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

json stall_json(const StallRecord& s) {
  return {{"stall_id", s.stall_id},
          {"camera_id", s.camera_id},
          {"bbox", bbox_json(s.bbox)},
          {"status", to_string(s.status)},
          {"updated_at", to_rfc3339(s.updated_at)}};
}

json lot_json(const LotRecord& l) {
  return {{"lot_id", l.lot_id}, {"display_name", l.display_name}, {"camera_ids", l.camera_ids}};
}

json camera_json(const CameraConfig& c) {
  return {{"camera_id", c.camera_id},
          {"lot_id", c.lot_id},
          {"snapshot_url", c.snapshot_url},
          {"poll_interval_s", c.poll_interval_s},
          {"timeout_s", c.timeout_s},
          {"has_credentials", !c.username.empty()}};
}

ApiResponse lot_not_found(const std::string& lot_id) {
  return api_error(404, "lot_not_found", fmt::format("lot '{}' not found", lot_id));
}

bool valid_id(const std::string& id) {
  static const std::regex kId(R"([A-Za-z0-9_.\-]{1,64})");
  return std::regex_match(id, kId);
}

std::optional<std::int64_t> parse_stall_id(const std::string& text) {
  std::int64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end || v < 0) return std::nullopt;
  return v;
}

std::optional<json> parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

ApiResponse bad_json() { return api_error(400, "invalid_json", "request body must be a JSON object"); }

std::optional<BBox> parse_bbox(const json& j) {
  if (!j.is_object()) return std::nullopt;
  BBox b;
  for (auto [key, field] : {std::pair{"x", &b.x}, {"y", &b.y}, {"w", &b.w}, {"h", &b.h}}) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer()) return std::nullopt;
    *field = it->get<std::int64_t>();
  }
  return b;
}

}  // namespace

ApiResponse api_error(int status, const std::string& code, const std::string& message) {
  return ok_json({{"code", code}, {"message", message}}, status);
}

Api::Api(Registry& registry, std::string admin_token) : registry_(registry), admin_token_(std::move(admin_token)) {}

std::optional<ApiResponse> Api::check_token(const std::optional<std::string>& token) const {
  if (admin_token_.empty()) {
    return api_error(403, "admin_disabled", "no admin token is configured; mutating routes are disabled");
  }
  if (!token || *token != admin_token_) {
    return api_error(401, "unauthorized", "missing or wrong X-Admin-Token header");
  }
  return std::nullopt;
}

ApiResponse Api::healthz() const { return ok_json({{"status", "ok"}, {"schema_version", Registry::schema_version()}}); }

ApiResponse Api::list_lots() const {
  json out = json::array();
  for (const auto& lot : registry_.list_lots()) out.push_back(lot_json(lot));
  return ok_json(out);
}

ApiResponse Api::create_lot(const std::string& body, const std::optional<std::string>& token) {
  if (auto denied = check_token(token)) return *denied;
  auto j = parse_body(body);
  if (!j) return bad_json();
  const auto id = j->value("lot_id", json()).is_string() ? (*j)["lot_id"].get<std::string>() : std::string();
  if (!valid_id(id)) return api_error(422, "invalid_lot", "lot_id must be 1-64 characters of [A-Za-z0-9_.-]");
  std::string display = id;
  if (auto it = j->find("display_name"); it != j->end()) {
    if (!it->is_string()) return api_error(422, "invalid_lot", "display_name must be a string");
    display = it->get<std::string>();
  }
  const bool existed = registry_.find_lot(id).has_value();
  registry_.upsert_lot({id, display, {}});
  return ok_json(lot_json(*registry_.find_lot(id)), existed ? 200 : 201);
}

ApiResponse Api::stalls(const std::string& lot_id) const {
  if (!registry_.find_lot(lot_id)) return lot_not_found(lot_id);
  json out = json::array();
  for (const auto& s : registry_.lot_status(lot_id)) out.push_back(stall_json(s));
  return ok_json(out);
}

ApiResponse Api::summary(const std::string& lot_id) const {
  if (!registry_.find_lot(lot_id)) return lot_not_found(lot_id);
  const LotSummary s = registry_.summary(lot_id);
  return ok_json({{"free", s.free}, {"total", s.total}, {"unknown", s.unknown}});
}

ApiResponse Api::put_stall(const std::string& lot_id, const std::string& stall_id, const std::string& body,
                           const std::optional<std::string>& token) {
  if (auto denied = check_token(token)) return *denied;
  if (!registry_.find_lot(lot_id)) return lot_not_found(lot_id);
  const auto id = parse_stall_id(stall_id);
  if (!id) return api_error(400, "invalid_stall_id", fmt::format("stall id '{}' is not a non-negative integer", stall_id));
  auto j = parse_body(body);
  if (!j) return bad_json();
  const auto bbox = parse_bbox(j->value("bbox", json()));
  if (!bbox) return api_error(422, "invalid_bbox", "bbox must be an object with integer fields x, y, w, h");
  if (!bbox->valid()) {
    return api_error(422, "invalid_bbox",
                     fmt::format("bbox ({},{},{},{}) needs x,y >= 0 and w,h > 0", bbox->x, bbox->y, bbox->w, bbox->h));
  }
  auto cam = j->find("camera_id");
  if (cam == j->end() || !cam->is_string()) return api_error(422, "invalid_camera", "camera_id must be a string");
  try {
    const StallRecord rec = registry_.upsert_stall(lot_id, *id, *bbox, cam->get<std::string>());
    return ok_json(stall_json(rec));
  } catch (const ValidationError& e) {
    return api_error(422, "invalid_camera", e.what());
  }
}

ApiResponse Api::delete_stall(const std::string& lot_id, const std::string& stall_id,
                              const std::optional<std::string>& token) {
  if (auto denied = check_token(token)) return *denied;
  if (!registry_.find_lot(lot_id)) return lot_not_found(lot_id);
  const auto id = parse_stall_id(stall_id);
  if (!id) return api_error(400, "invalid_stall_id", fmt::format("stall id '{}' is not a non-negative integer", stall_id));
  if (!registry_.delete_stall(lot_id, *id)) {
    return api_error(404, "stall_not_found", fmt::format("stall {} not found in lot '{}'", *id, lot_id));
  }
  ApiResponse r;
  r.status = 204;
  r.content_type.clear();
  return r;
}

ApiResponse Api::frame(const std::string& lot_id, const std::string& camera_id) const {
  if (!registry_.find_lot(lot_id)) return lot_not_found(lot_id);
  const auto cam = registry_.find_camera(camera_id);
  if (!cam || cam->lot_id != lot_id) {
    return api_error(404, "camera_not_found", fmt::format("camera '{}' not found in lot '{}'", camera_id, lot_id));
  }
  auto frame = registry_.latest_frame(camera_id);
  if (!frame) {
    ApiResponse r = api_error(503, "no_frame_yet", fmt::format("camera '{}' has not been polled yet", camera_id));
    r.headers.emplace_back("Retry-After", fmt::format("{}", static_cast<long>(std::ceil(cam->poll_interval_s))));
    return r;
  }
  ApiResponse r;
  r.body.assign(frame->png.begin(), frame->png.end());
  r.content_type = "image/png";
  r.headers.emplace_back("X-Captured-At", to_rfc3339(frame->captured_at));
  r.headers.emplace_back("Cache-Control", "no-store");
  return r;
}

ApiResponse Api::create_camera(const std::string& body, const std::optional<std::string>& token) {
  if (auto denied = check_token(token)) return *denied;
  auto j = parse_body(body);
  if (!j) return bad_json();
  CameraConfig cam;
  try {
    cam.camera_id = j->value("camera_id", std::string());
    cam.lot_id = j->value("lot_id", std::string());
    cam.snapshot_url = j->value("snapshot_url", std::string());
    cam.poll_interval_s = j->value("poll_interval_s", 10.0);
    cam.timeout_s = j->value("timeout_s", 5.0);
    cam.username = j->value("username", std::string());
    cam.password = j->value("password", std::string());
  } catch (const json::exception& e) {
    return api_error(422, "invalid_camera", fmt::format("wrong field type: {}", e.what()));
  }
  if (!valid_id(cam.camera_id)) {
    return api_error(422, "invalid_camera", "camera_id must be 1-64 characters of [A-Za-z0-9_.-]");
  }
  try {
    validate(cam);
  } catch (const ValidationError& e) {
    return api_error(422, "invalid_camera", e.what());
  }
  if (!registry_.find_lot(cam.lot_id)) return lot_not_found(cam.lot_id);
  const bool existed = registry_.find_camera(cam.camera_id).has_value();
  try {
    registry_.upsert_camera(cam);
  } catch (const ValidationError& e) {
    return api_error(422, "invalid_camera", e.what());
  }
  return ok_json(camera_json(cam), existed ? 200 : 201);
}

struct WebService::Impl {
  Impl(Registry& registry, WebOptions opts) : api(registry, std::move(opts.admin_token)), options(std::move(opts)) {}

  Api api;
  WebOptions options;
  httplib::Server server;
  std::mutex state_mutex;
  bool serving = false;
  bool stop_requested = false;
};

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  for (const auto& [k, v] : r.headers) res.set_header(k, v);
  if (!r.content_type.empty()) res.set_content(r.body, r.content_type);
}

std::optional<std::string> admin_token(const httplib::Request& req) {
  if (!req.has_header("X-Admin-Token")) return std::nullopt;
  return req.get_header_value("X-Admin-Token");
}

}  // namespace

WebService::WebService(Registry& registry, WebOptions options)
    : impl_(std::make_unique<Impl>(registry, std::move(options))) {
  auto& srv = impl_->server;
  Api& api = impl_->api;

  srv.Get("/healthz", [&api](const httplib::Request&, httplib::Response& res) { send(res, api.healthz()); });
  srv.Get("/api/lots", [&api](const httplib::Request&, httplib::Response& res) { send(res, api.list_lots()); });
  srv.Post("/api/lots", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.create_lot(req.body, admin_token(req)));
  });
  srv.Get(R"(/api/lots/([^/]+)/stalls)", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.stalls(req.matches[1]));
  });
  srv.Get(R"(/api/lots/([^/]+)/summary)", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.summary(req.matches[1]));
  });
  srv.Put(R"(/api/lots/([^/]+)/stalls/([^/]+))", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.put_stall(req.matches[1], req.matches[2], req.body, admin_token(req)));
  });
  srv.Delete(R"(/api/lots/([^/]+)/stalls/([^/]+))", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.delete_stall(req.matches[1], req.matches[2], admin_token(req)));
  });
  srv.Get(R"(/api/lots/([^/]+)/cameras/([^/]+)/frame)", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.frame(req.matches[1], req.matches[2]));
  });
  srv.Post("/api/cameras", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.create_camera(req.body, admin_token(req)));
  });

  srv.set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("{} {}: {}", req.method, req.path, what);
    send(res, api_error(500, "internal_error", what));
  });
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send(res, api_error(404, "route_not_found", fmt::format("no route for {} {}", req.method, req.path)));
    } else if (res.status >= 400) {
      send(res, api_error(res.status, "http_error", httplib::status_message(res.status)));
    }
  });
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });

  if (impl_->options.static_dir) {
    if (!srv.set_mount_point("/", impl_->options.static_dir->string())) {
      throw ConfigError(fmt::format("static_dir '{}' is not a directory", impl_->options.static_dir->string()));
    }
  }
}

WebService::~WebService() { stop(); }

int WebService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw IoError(fmt::format("cannot bind {}:0", host));
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw IoError(fmt::format("cannot bind {}:{}", host, port));
  return port;
}

void WebService::serve() {
  {
    std::lock_guard lock(impl_->state_mutex);
    if (impl_->stop_requested) return;
    impl_->serving = true;
  }
  if (!impl_->server.listen_after_bind()) spdlog::debug("web server loop exited");
}

void WebService::wait_until_ready() const { impl_->server.wait_until_ready(); }

void WebService::stop() {
  {
    std::lock_guard lock(impl_->state_mutex);
    impl_->stop_requested = true;
    if (!impl_->serving) return;
  }
  impl_->server.wait_until_ready();
  impl_->server.stop();
}

}  // namespace pv
