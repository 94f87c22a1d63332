#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "parkvision/registry.hpp"

namespace pv {

inline constexpr const char* kJsonContentType = "application/json; charset=utf-8";

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = kJsonContentType;
  std::vector<std::pair<std::string, std::string>> headers;
};

// Error body shared by every route: {"code": ..., "message": ...}.
ApiResponse api_error(int status, const std::string& code, const std::string& message);

// Route handlers, independent of the HTTP transport. `token` is the value of
// the X-Admin-Token request header (nullopt when absent).
class Api {
 public:
  // An empty admin token disables every mutating route.
  Api(Registry& registry, std::string admin_token);

  ApiResponse healthz() const;
  ApiResponse list_lots() const;
  ApiResponse create_lot(const std::string& body, const std::optional<std::string>& token);
  ApiResponse stalls(const std::string& lot_id) const;
  ApiResponse summary(const std::string& lot_id) const;
  ApiResponse put_stall(const std::string& lot_id, const std::string& stall_id, const std::string& body,
                        const std::optional<std::string>& token);
  ApiResponse delete_stall(const std::string& lot_id, const std::string& stall_id,
                           const std::optional<std::string>& token);
  ApiResponse frame(const std::string& lot_id, const std::string& camera_id) const;
  ApiResponse create_camera(const std::string& body, const std::optional<std::string>& token);

 private:
  std::optional<ApiResponse> check_token(const std::optional<std::string>& token) const;

  Registry& registry_;
  std::string admin_token_;
};

struct WebOptions {
  std::string admin_token;
  std::optional<std::filesystem::path> static_dir;  // mounted at "/"
};

// HTTP/1.1 server exposing Api. Requests are served on a thread pool.
class WebService {
 public:
  WebService(Registry& registry, WebOptions options);
  ~WebService();
  WebService(const WebService&) = delete;
  WebService& operator=(const WebService&) = delete;

  // Binds and returns the bound port (port 0 picks a free one).
  int bind(const std::string& host, int port);
  // Blocks serving requests until stop(). Requires bind().
  void serve();
  // Returns once serve() is accepting connections (or has exited).
  void wait_until_ready() const;
  // Safe to call from another thread or a signal-watcher.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pv
