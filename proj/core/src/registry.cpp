#include "parkvision/registry.hpp"

#include <regex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <sqlite3.h>

#include "parkvision/errors.hpp"

namespace pv {

const char* to_string(StallStatus s) noexcept {
  switch (s) {
    case StallStatus::kVacant:
      return "vacant";
    case StallStatus::kOccupied:
      return "occupied";
    case StallStatus::kUnknown:
      break;
  }
  return "unknown";
}

std::optional<StallStatus> parse_stall_status(std::string_view text) noexcept {
  if (text == "vacant") return StallStatus::kVacant;
  if (text == "occupied") return StallStatus::kOccupied;
  if (text == "unknown") return StallStatus::kUnknown;
  return std::nullopt;
}

void validate(const CameraConfig& camera) {
  if (camera.camera_id.empty()) throw ValidationError("camera_id must not be empty");
  if (camera.lot_id.empty()) throw ValidationError(fmt::format("camera '{}' has no lot", camera.camera_id));
  if (!(camera.poll_interval_s > 0)) {
    throw ValidationError(fmt::format("camera '{}': poll_interval_s must be > 0", camera.camera_id));
  }
  if (!(camera.timeout_s > 0)) throw ValidationError(fmt::format("camera '{}': timeout_s must be > 0", camera.camera_id));
  static const std::regex kUrl(R"(^https?://[^/\s:]+(:\d+)?(/\S*)?$)", std::regex::icase);
  if (!std::regex_match(camera.snapshot_url, kUrl)) {
    throw ValidationError(fmt::format("camera '{}': snapshot_url '{}' is not an http(s) URL", camera.camera_id,
                                      camera.snapshot_url));
  }
}

namespace {

// Forward-only migrations; index i upgrades user_version i -> i+1.
const char* const kMigrations[] = {
    R"sql(
CREATE TABLE lots (
  lot_id       TEXT PRIMARY KEY,
  display_name TEXT NOT NULL
);
CREATE TABLE cameras (
  camera_id       TEXT PRIMARY KEY,
  lot_id          TEXT NOT NULL REFERENCES lots(lot_id),
  snapshot_url    TEXT NOT NULL,
  poll_interval_s REAL NOT NULL,
  timeout_s       REAL NOT NULL,
  username        TEXT NOT NULL DEFAULT '',
  password        TEXT NOT NULL DEFAULT ''
);
CREATE TABLE stalls (
  lot_id     TEXT NOT NULL REFERENCES lots(lot_id),
  stall_id   INTEGER NOT NULL,
  x          INTEGER NOT NULL,
  y          INTEGER NOT NULL,
  w          INTEGER NOT NULL,
  h          INTEGER NOT NULL,
  camera_id  TEXT NOT NULL,
  blob       BLOB NOT NULL DEFAULT x'',
  status     TEXT NOT NULL CHECK (status IN ('vacant', 'occupied', 'unknown')),
  updated_at INTEGER NOT NULL,
  PRIMARY KEY (lot_id, stall_id)
);
CREATE INDEX stalls_by_camera ON stalls(camera_id);
)sql",
    R"sql(
CREATE TABLE frames (
  camera_id   TEXT PRIMARY KEY,
  png         BLOB NOT NULL,
  captured_at INTEGER NOT NULL
);
)sql",
};

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw IoError(fmt::format("sqlite prepare failed: {}", sqlite3_errmsg(db)));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, const std::string& v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, double v) {
    check(sqlite3_bind_double(stmt_, i, v));
    return *this;
  }
  Statement& bind_blob(int i, const std::vector<std::uint8_t>& v) {
    check(sqlite3_bind_blob(stmt_, i, v.empty() ? "" : static_cast<const void*>(v.data()), static_cast<int>(v.size()),
                            SQLITE_TRANSIENT));
    return *this;
  }

  // True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw IoError(fmt::format("sqlite step failed: {}", sqlite3_errmsg(db_)));
  }

  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
  double real(int col) const { return sqlite3_column_double(stmt_, col); }
  std::vector<std::uint8_t> blob(int col) const {
    const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, col));
    const int n = sqlite3_column_bytes(stmt_, col);
    return p ? std::vector<std::uint8_t>(p, p + n) : std::vector<std::uint8_t>();
  }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) throw IoError(fmt::format("sqlite bind failed: {}", sqlite3_errmsg(db_)));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw IoError(fmt::format("sqlite: {}", msg));
  }
}

class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

constexpr const char* kStallColumns = "lot_id, stall_id, x, y, w, h, camera_id, status, updated_at";

StallRecord read_stall(const Statement& st, bool with_blob_col) {
  StallRecord r;
  r.lot_id = st.text(0);
  r.stall_id = st.int64(1);
  r.bbox = {st.int64(2), st.int64(3), st.int64(4), st.int64(5)};
  r.camera_id = st.text(6);
  r.status = parse_stall_status(st.text(7)).value_or(StallStatus::kUnknown);
  r.updated_at = from_unix_millis(st.int64(8));
  if (with_blob_col) r.blob = st.blob(9);
  return r;
}

}  // namespace

int Registry::schema_version() { return static_cast<int>(std::size(kMigrations)); }

Registry::Registry(const std::filesystem::path& db_path, NowFn now) : now_(std::move(now)) {
  const std::string path = db_path.string();
  if (path != ":memory:" && db_path.has_parent_path()) std::filesystem::create_directories(db_path.parent_path());
  const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
  if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw IoError(fmt::format("cannot open registry '{}': {}", path, msg));
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(db_, "PRAGMA foreign_keys = ON");
  if (path != ":memory:") exec(db_, "PRAGMA journal_mode = WAL");
  migrate();
}

Registry::~Registry() { sqlite3_close(db_); }

void Registry::migrate() {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  Statement v(db_, "PRAGMA user_version");
  v.step();
  const auto current = static_cast<int>(v.int64(0));
  if (current > schema_version()) {
    throw IoError(fmt::format("registry schema version {} is newer than this build ({})", current, schema_version()));
  }
  for (int i = current; i < schema_version(); ++i) {
    spdlog::info("migrating registry schema {} -> {}", i, i + 1);
    exec(db_, kMigrations[i]);
  }
  exec(db_, fmt::format("PRAGMA user_version = {}", schema_version()).c_str());
  tx.commit();
}

void Registry::require_lot(const std::string& lot_id) const {
  Statement st(db_, "SELECT 1 FROM lots WHERE lot_id = ?");
  st.bind(1, lot_id);
  if (!st.step()) throw NotFoundError(fmt::format("lot '{}' not found", lot_id));
}

void Registry::upsert_lot(const LotRecord& lot) {
  if (lot.lot_id.empty()) throw ValidationError("lot_id must not be empty");
  std::lock_guard lock(mutex_);
  Statement st(db_,
               "INSERT INTO lots(lot_id, display_name) VALUES(?, ?) "
               "ON CONFLICT(lot_id) DO UPDATE SET display_name = excluded.display_name");
  st.bind(1, lot.lot_id).bind(2, lot.display_name.empty() ? lot.lot_id : lot.display_name);
  st.step();
}

std::optional<LotRecord> Registry::find_lot(const std::string& lot_id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT lot_id, display_name FROM lots WHERE lot_id = ?");
  st.bind(1, lot_id);
  if (!st.step()) return std::nullopt;
  LotRecord lot{st.text(0), st.text(1), {}};
  Statement cams(db_, "SELECT camera_id FROM cameras WHERE lot_id = ? ORDER BY camera_id");
  cams.bind(1, lot_id);
  while (cams.step()) lot.camera_ids.push_back(cams.text(0));
  return lot;
}

std::vector<LotRecord> Registry::list_lots() const {
  std::vector<std::string> ids;
  {
    std::lock_guard lock(mutex_);
    Statement st(db_, "SELECT lot_id FROM lots ORDER BY lot_id");
    while (st.step()) ids.push_back(st.text(0));
  }
  std::vector<LotRecord> out;
  for (const auto& id : ids) {
    if (auto lot = find_lot(id)) out.push_back(std::move(*lot));
  }
  return out;
}

void Registry::upsert_camera(const CameraConfig& camera) {
  validate(camera);
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  require_lot(camera.lot_id);
  Statement st(db_,
               "INSERT INTO cameras(camera_id, lot_id, snapshot_url, poll_interval_s, timeout_s, username, password) "
               "VALUES(?, ?, ?, ?, ?, ?, ?) ON CONFLICT(camera_id) DO UPDATE SET lot_id = excluded.lot_id, "
               "snapshot_url = excluded.snapshot_url, poll_interval_s = excluded.poll_interval_s, "
               "timeout_s = excluded.timeout_s, username = excluded.username, password = excluded.password");
  st.bind(1, camera.camera_id)
      .bind(2, camera.lot_id)
      .bind(3, camera.snapshot_url)
      .bind(4, camera.poll_interval_s)
      .bind(5, camera.timeout_s)
      .bind(6, camera.username)
      .bind(7, camera.password);
  st.step();
  tx.commit();
}

namespace {

CameraConfig read_camera(const Statement& st) {
  return {st.text(0), st.text(1), st.text(2), st.real(3), st.real(4), st.text(5), st.text(6)};
}

}  // namespace

std::optional<CameraConfig> Registry::find_camera(const std::string& camera_id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_,
               "SELECT camera_id, lot_id, snapshot_url, poll_interval_s, timeout_s, username, password "
               "FROM cameras WHERE camera_id = ?");
  st.bind(1, camera_id);
  if (!st.step()) return std::nullopt;
  return read_camera(st);
}

std::vector<CameraConfig> Registry::list_cameras(const std::optional<std::string>& lot_id) const {
  std::lock_guard lock(mutex_);
  std::vector<CameraConfig> out;
  if (lot_id) {
    Statement st(db_,
                 "SELECT camera_id, lot_id, snapshot_url, poll_interval_s, timeout_s, username, password "
                 "FROM cameras WHERE lot_id = ? ORDER BY camera_id");
    st.bind(1, *lot_id);
    while (st.step()) out.push_back(read_camera(st));
  } else {
    Statement st(db_,
                 "SELECT camera_id, lot_id, snapshot_url, poll_interval_s, timeout_s, username, password "
                 "FROM cameras ORDER BY camera_id");
    while (st.step()) out.push_back(read_camera(st));
  }
  return out;
}

StallRecord Registry::upsert_stall(const std::string& lot_id, std::int64_t stall_id, const BBox& bbox,
                                   const std::string& camera_id) {
  if (!bbox.valid()) {
    throw ValidationError(fmt::format("invalid bbox x={} y={} w={} h={}: need x,y >= 0 and w,h > 0", bbox.x, bbox.y,
                                      bbox.w, bbox.h));
  }
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  require_lot(lot_id);
  {
    Statement cam(db_, "SELECT lot_id FROM cameras WHERE camera_id = ?");
    cam.bind(1, camera_id);
    if (!cam.step() || cam.text(0) != lot_id) {
      throw ValidationError(fmt::format("camera '{}' is not registered for lot '{}'", camera_id, lot_id));
    }
  }
  const std::int64_t now = to_unix_millis(now_());
  Statement existing(db_, "SELECT x, y, w, h FROM stalls WHERE lot_id = ? AND stall_id = ?");
  existing.bind(1, lot_id).bind(2, stall_id);
  if (existing.step()) {
    const BBox old{existing.int64(0), existing.int64(1), existing.int64(2), existing.int64(3)};
    if (old == bbox) {
      Statement st(db_, "UPDATE stalls SET camera_id = ? WHERE lot_id = ? AND stall_id = ?");
      st.bind(1, camera_id).bind(2, lot_id).bind(3, stall_id);
      st.step();
    } else {
      Statement st(db_,
                   "UPDATE stalls SET x = ?, y = ?, w = ?, h = ?, camera_id = ?, status = 'unknown', updated_at = ? "
                   "WHERE lot_id = ? AND stall_id = ?");
      st.bind(1, bbox.x).bind(2, bbox.y).bind(3, bbox.w).bind(4, bbox.h).bind(5, camera_id).bind(6, now);
      st.bind(7, lot_id).bind(8, stall_id);
      st.step();
    }
  } else {
    Statement st(db_,
                 "INSERT INTO stalls(lot_id, stall_id, x, y, w, h, camera_id, blob, status, updated_at) "
                 "VALUES(?, ?, ?, ?, ?, ?, ?, x'', 'unknown', ?)");
    st.bind(1, lot_id).bind(2, stall_id).bind(3, bbox.x).bind(4, bbox.y).bind(5, bbox.w).bind(6, bbox.h);
    st.bind(7, camera_id).bind(8, now);
    st.step();
  }
  Statement read(db_, fmt::format("SELECT {}, blob FROM stalls WHERE lot_id = ? AND stall_id = ?", kStallColumns).c_str());
  read.bind(1, lot_id).bind(2, stall_id);
  read.step();
  StallRecord out = read_stall(read, true);
  tx.commit();
  return out;
}

bool Registry::delete_stall(const std::string& lot_id, std::int64_t stall_id) {
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  require_lot(lot_id);
  Statement st(db_, "DELETE FROM stalls WHERE lot_id = ? AND stall_id = ?");
  st.bind(1, lot_id).bind(2, stall_id);
  st.step();
  const bool removed = sqlite3_changes(db_) > 0;
  tx.commit();
  return removed;
}

std::optional<StallRecord> Registry::find_stall(const std::string& lot_id, std::int64_t stall_id,
                                                bool include_blob) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, fmt::format("SELECT {}{} FROM stalls WHERE lot_id = ? AND stall_id = ?", kStallColumns,
                                include_blob ? ", blob" : "")
                        .c_str());
  st.bind(1, lot_id).bind(2, stall_id);
  if (!st.step()) return std::nullopt;
  return read_stall(st, include_blob);
}

StallRecord Registry::record_observation(const std::string& lot_id, std::int64_t stall_id,
                                         std::vector<std::uint8_t> blob, double occupied_prob,
                                         Timestamp observed_at) {
  if (std::isnan(occupied_prob)) throw ValidationError("occupied_prob is NaN");
  const StallStatus status = occupied_prob >= 0.5 ? StallStatus::kOccupied : StallStatus::kVacant;
  std::lock_guard lock(mutex_);
  Transaction tx(db_);
  Statement st(db_, "UPDATE stalls SET blob = ?, status = ?, updated_at = ? WHERE lot_id = ? AND stall_id = ?");
  st.bind_blob(1, blob).bind(2, std::string(to_string(status))).bind(3, to_unix_millis(observed_at));
  st.bind(4, lot_id).bind(5, stall_id);
  st.step();
  if (sqlite3_changes(db_) == 0) throw NotFoundError(fmt::format("stall {} not found in lot '{}'", stall_id, lot_id));
  Statement read(db_, fmt::format("SELECT {}, blob FROM stalls WHERE lot_id = ? AND stall_id = ?", kStallColumns).c_str());
  read.bind(1, lot_id).bind(2, stall_id);
  read.step();
  StallRecord out = read_stall(read, true);
  tx.commit();
  return out;
}

std::vector<StallRecord> Registry::lot_status(const std::string& lot_id, bool include_blobs) const {
  std::lock_guard lock(mutex_);
  require_lot(lot_id);
  Statement st(db_, fmt::format("SELECT {}{} FROM stalls WHERE lot_id = ? ORDER BY stall_id", kStallColumns,
                                include_blobs ? ", blob" : "")
                        .c_str());
  st.bind(1, lot_id);
  std::vector<StallRecord> out;
  while (st.step()) out.push_back(read_stall(st, include_blobs));
  return out;
}

std::vector<StallRecord> Registry::camera_stalls(const std::string& camera_id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, fmt::format("SELECT {} FROM stalls WHERE camera_id = ? ORDER BY lot_id, stall_id", kStallColumns)
                        .c_str());
  st.bind(1, camera_id);
  std::vector<StallRecord> out;
  while (st.step()) out.push_back(read_stall(st, false));
  return out;
}

LotSummary Registry::summary(const std::string& lot_id) const {
  std::lock_guard lock(mutex_);
  require_lot(lot_id);
  Statement st(db_,
               "SELECT COUNT(*), COALESCE(SUM(status = 'vacant'), 0), COALESCE(SUM(status = 'unknown'), 0) "
               "FROM stalls WHERE lot_id = ?");
  st.bind(1, lot_id);
  st.step();
  return {st.int64(1), st.int64(0), st.int64(2)};
}

std::size_t Registry::mark_stale(const std::string& camera_id, Timestamp cutoff) {
  std::lock_guard lock(mutex_);
  Statement st(db_, "UPDATE stalls SET status = 'unknown' WHERE camera_id = ? AND status != 'unknown' AND updated_at < ?");
  st.bind(1, camera_id).bind(2, to_unix_millis(cutoff));
  st.step();
  return static_cast<std::size_t>(sqlite3_changes(db_));
}

void Registry::store_frame(const std::string& camera_id, const CachedFrame& frame) {
  std::lock_guard lock(mutex_);
  Statement st(db_,
               "INSERT INTO frames(camera_id, png, captured_at) VALUES(?, ?, ?) ON CONFLICT(camera_id) DO UPDATE "
               "SET png = excluded.png, captured_at = excluded.captured_at");
  st.bind(1, camera_id).bind_blob(2, frame.png).bind(3, to_unix_millis(frame.captured_at));
  st.step();
}

std::optional<CachedFrame> Registry::latest_frame(const std::string& camera_id) const {
  std::lock_guard lock(mutex_);
  Statement st(db_, "SELECT png, captured_at FROM frames WHERE camera_id = ?");
  st.bind(1, camera_id);
  if (!st.step()) return std::nullopt;
  return CachedFrame{st.blob(0), from_unix_millis(st.int64(1))};
}

}  // namespace pv
