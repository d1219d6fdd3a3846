#include "cooctex/service/service.hpp"

#include <httplib.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cooctex/error.hpp"
#include "cooctex/image.hpp"
#include "cooctex/log.hpp"
#include "cooctex/nn/synthesis.hpp"
#include "cooctex/stats_bundle.hpp"
#include "cooctex/util.hpp"

namespace cooctex::service {

using nlohmann::json;

// ---------------------------------------------------------------------------
// InferenceQueue

InferenceQueue::InferenceQueue(std::size_t depth) : depth_(depth), worker_([this] { loop(); }) {}

InferenceQueue::~InferenceQueue() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

bool InferenceQueue::try_submit(std::function<void()> job) {
  {
    std::lock_guard lock(mutex_);
    if (stop_ || jobs_.size() >= depth_) return false;
    jobs_.push_back(std::move(job));
  }
  cv_.notify_one();
  return true;
}

std::size_t InferenceQueue::pending() const {
  std::lock_guard lock(mutex_);
  return jobs_.size();
}

void InferenceQueue::loop() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stop_ || !jobs_.empty(); });
      if (jobs_.empty()) return;  // stopping and drained
      job = std::move(jobs_.front());
      jobs_.pop_front();
    }
    job();
  }
}

// ---------------------------------------------------------------------------
// Tensor JSON

json tensor_to_json(const CoocTensor& t) {
  const int k = t.k();
  json data = json::array();
  for (int y = 0; y < t.height(); ++y) {
    json row = json::array();
    for (int x = 0; x < t.width(); ++x) {
      const auto cell = t.cell(y, x);
      json m = json::array();
      for (int a = 0; a < k; ++a) m.push_back(std::vector<double>(cell.begin() + a * k, cell.begin() + (a + 1) * k));
      row.push_back(std::move(m));
    }
    data.push_back(std::move(row));
  }
  return {{"shape", {t.height(), t.width(), k, k}}, {"scale", t.scale()}, {"data", std::move(data)}};
}

CoocTensor tensor_from_json(const json& j) {
  auto fail = [](const std::string& what) -> CoocTensor { throw InvalidArgument("tensor: " + what); };
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) return fail("expected {shape, data}");
  const json& shape = j.at("shape");
  if (!shape.is_array() || shape.size() != 4) return fail("shape must be [H, W, k, k]");
  for (const json& v : shape)
    if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > 4096)
      return fail("shape entries must be positive integers");
  const int h = shape[0], w = shape[1], k = shape[2];
  if (shape[3].get<int>() != k) return fail("matrices must be square");
  const int scale = j.value("scale", 1);
  if (scale < 1) return fail("scale must be positive");
  CoocTensor t(h, w, k, scale);
  const json& data = j.at("data");
  if (!data.is_array() || static_cast<int>(data.size()) != h) return fail("data does not match shape");
  for (int y = 0; y < h; ++y) {
    if (!data[y].is_array() || static_cast<int>(data[y].size()) != w) return fail("data does not match shape");
    for (int x = 0; x < w; ++x) {
      const json& m = data[y][x];
      if (!m.is_array() || static_cast<int>(m.size()) != k) return fail("data does not match shape");
      auto cell = t.cell(y, x);
      for (int a = 0; a < k; ++a) {
        if (!m[a].is_array() || static_cast<int>(m[a].size()) != k) return fail("data does not match shape");
        for (int b = 0; b < k; ++b) {
          if (!m[a][b].is_number()) return fail("entries must be numbers");
          const double v = m[a][b];
          if (!std::isfinite(v) || v < 0) return fail("entries must be finite and non-negative");
          cell[a * k + b] = v;
        }
      }
      const CoocMatrix mat = t.matrix(y, x);
      if (std::abs(mat.sum() - 1.0) > 1e-6 || mat.asymmetry() > 1e-6)
        return fail("position (" + std::to_string(y) + "," + std::to_string(x) +
                    ") is not a symmetric unit-sum matrix");
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Request helpers

namespace {

/// Validation failure attributable to one request field (answered 422).
struct FieldError : std::runtime_error {
  std::string field;
  FieldError(std::string f, const std::string& message) : std::runtime_error(message), field(std::move(f)) {}
};

/// Answered with an arbitrary status and message.
struct HttpError : std::runtime_error {
  int status;
  HttpError(int s, const std::string& message) : std::runtime_error(message), status(s) {}
};

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  send_json(res, body, status);
}

json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty()) {
    if (allow_empty) return json::object();
    throw HttpError(400, "request body required");
  }
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw HttpError(400, "body must be a JSON object");
  return j;
}

std::uint64_t read_seed(const json& body, std::uint64_t fallback) {
  if (!body.contains("seed") || body["seed"].is_null()) return fallback;
  const json& s = body["seed"];
  if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
    throw FieldError("seed", "seed must be a non-negative integer");
  return s.get<std::uint64_t>();
}

std::pair<int, int> read_pair(const json& body, const std::string& field, int limit_a, int limit_b) {
  const json& v = body[field];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
    throw FieldError(field, field + " must be a pair of integers");
  const int a = v[0], b = v[1];
  if (a < 0 || a >= limit_a || b < 0 || b >= limit_b)
    throw FieldError(field, field + " (" + std::to_string(a) + "," + std::to_string(b) + ") is out of range");
  return {a, b};
}

json session_json(const Session& s) {
  return {{"id", s.id}, {"seed", s.seed}, {"history", s.history.size()}, {"tensor", tensor_to_json(s.tensor)}};
}

/// Runs a handler and maps library and request errors to HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const FieldError& e) {
    send_error(res, 422, e.what(), e.field);
  } catch (const HttpError& e) {
    send_error(res, e.status, e.what());
  } catch (const ShapeMismatch& e) {
    send_error(res, 422, e.what());
  } catch (const DegenerateStatistics& e) {
    send_error(res, 422, e.what());
  } catch (const FormatError& e) {
    send_error(res, 422, e.what());
  } catch (const InvalidArgument& e) {
    send_error(res, 422, e.what());
  } catch (const std::exception& e) {
    log::warn(std::string("service: internal error: ") + e.what());
    send_error(res, 500, e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Service

Service::Service(nn::ModelCheckpoint checkpoint, ServiceOptions options)
    : checkpoint_(std::move(checkpoint)),
      options_(std::move(options)),
      queue_(options_.queue_depth),
      server_(std::make_unique<httplib::Server>()) {
  id_salt_ = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
  install_routes();
}

Service::~Service() { stop(); }

bool Service::listen(const std::string& host, int port) {
  log::info("service listening on " + host + ":" + std::to_string(port));
  return server_->listen(host, port);
}

int Service::start_background(const std::string& host) {
  const int port = server_->bind_to_any_port(host);
  if (port < 0) throw Error("service: cannot bind to " + host);
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

std::size_t Service::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<Session> Service::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "unknown session '" + id + "'");
  return it->second;
}

std::shared_ptr<Session> Service::create(CoocTensor tensor, std::uint64_t seed) {
  auto s = std::make_shared<Session>();
  s->tensor = std::move(tensor);
  s->seed = seed;
  std::lock_guard lock(sessions_mutex_);
  std::ostringstream id;
  id << std::hex << derive_seed(id_salt_, "session/" + std::to_string(next_id_++));
  s->id = id.str();
  sessions_[s->id] = s;
  return s;
}

void Service::install_routes() {
  httplib::Server& srv = *server_;
  srv.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  const int k = checkpoint_.k();
  auto check_tensor = [this](const CoocTensor& t, const std::string& field) {
    if (t.k() != checkpoint_.k())
      throw FieldError(field, "tensor has k=" + std::to_string(t.k()) + ", the model expects " +
                                  std::to_string(checkpoint_.k()));
  };
  auto push_history = [this](Session& s) {
    s.history.push_back(s.tensor);
    while (s.history.size() > options_.history) s.history.pop_front();
  };

  srv.Get("/palette", [this](const httplib::Request&, httplib::Response& res) {
    const Palette& p = checkpoint_.stats.palette;
    json centers = json::array(), spreads = json::array();
    for (const Rgb& c : p.centers) centers.push_back({c[0], c[1], c[2]});
    for (const Rgb& s : p.spreads) spreads.push_back({s[0], s[1], s[2]});
    send_json(res, {{"k", p.k()}, {"centers", centers}, {"spreads", spreads}, {"scale", checkpoint_.stats.scale}});
  });

  srv.Post("/session", [this, check_tensor](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::uint64_t seed = options_.default_seed;
      std::optional<CoocTensor> tensor;
      std::string crop_bytes;
      const std::string type = req.get_header_value("Content-Type");
      if (req.is_multipart_form_data()) {
        if (!req.has_file("crop")) throw FieldError("crop", "multipart upload needs a 'crop' file");
        crop_bytes = req.get_file_value("crop").content;
      } else if (type.rfind("image/", 0) == 0) {
        crop_bytes = req.body;
      } else if (type.rfind("application/octet-stream", 0) == 0) {
        std::istringstream in(req.body);
        tensor = read_tensor(in);
      } else {
        const json body = parse_body(req, false);
        seed = read_seed(body, seed);
        if (!body.contains("tensor")) throw FieldError("tensor", "expected a 'tensor' or an uploaded crop");
        try {
          tensor = tensor_from_json(body["tensor"]);
        } catch (const InvalidArgument& e) {
          throw FieldError("tensor", e.what());
        }
      }
      if (!crop_bytes.empty()) {
        Image crop;
        try {
          crop = decode_image({reinterpret_cast<const std::uint8_t*>(crop_bytes.data()), crop_bytes.size()});
        } catch (const std::exception& e) {
          throw FieldError("crop", std::string("cannot decode image: ") + e.what());
        }
        const StatsBundle& s = checkpoint_.stats;
        if (crop.height() % s.scale != 0 || crop.width() % s.scale != 0)
          throw FieldError("crop", "crop sides must be multiples of " + std::to_string(s.scale));
        auto measured = queue_.run([&] { return cooc_tensor(crop, s.palette, s.params, s.scale); });
        if (!measured) throw HttpError(503, "inference queue full, retry later");
        tensor = std::move(*measured);
      }
      check_tensor(*tensor, "tensor");
      tensor->set_scale(checkpoint_.stats.scale);
      const auto session = create(std::move(*tensor), seed);
      std::lock_guard lock(session->mutex);
      send_json(res, session_json(*session), 201);
    });
  });

  srv.Get(R"(/session/([0-9a-f]+)/tensor)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto s = find(req.matches[1]);
      std::lock_guard lock(s->mutex);
      send_json(res, session_json(*s));
    });
  });

  srv.Delete(R"(/session/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::lock_guard lock(sessions_mutex_);
      if (sessions_.erase(req.matches[1]) == 0) throw HttpError(404, "unknown session");
      res.status = 204;
    });
  });

  srv.Post(R"(/session/([0-9a-f]+)/edit)", [this, k, push_history](const httplib::Request& req,
                                                                   httplib::Response& res) {
    guarded(res, [&] {
      const auto s = find(req.matches[1]);
      const json body = parse_body(req, false);
      if (!body.contains("bin")) throw FieldError("bin", "bin is required");
      const auto [a, b] = read_pair(body, "bin", k, k);
      if (!body.contains("factor") || !body["factor"].is_number())
        throw FieldError("factor", "factor must be a number");
      const double factor = body["factor"];
      if (!std::isfinite(factor) || factor < 0)
        throw FieldError("factor", "factor must be finite and non-negative");
      std::lock_guard lock(s->mutex);
      std::optional<std::pair<int, int>> cell;
      if (body.contains("cell") && !body["cell"].is_null())
        cell = read_pair(body, "cell", s->tensor.height(), s->tensor.width());
      CoocTensor edited;
      try {
        edited = nn::edit_tensor_bin(s->tensor, a, b, factor, cell);
      } catch (const InvalidArgument& e) {
        throw FieldError("factor", e.what());
      }
      push_history(*s);
      s->tensor = std::move(edited);
      send_json(res, session_json(*s));
    });
  });

  srv.Post(R"(/session/([0-9a-f]+)/synthesize)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto s = find(req.matches[1]);
      const json body = parse_body(req, true);
      CoocTensor tensor;
      std::uint64_t seed;
      {
        std::lock_guard lock(s->mutex);
        seed = read_seed(body, s->seed);
        tensor = s->tensor;
      }
      auto png = queue_.run([&] { return encode_png(nn::synthesize(checkpoint_, tensor, seed)); });
      if (!png) throw HttpError(503, "inference queue full, retry later");
      res.set_header("X-Seed", std::to_string(seed));
      res.set_content(std::string(png->begin(), png->end()), "image/png");
    });
  });

  srv.Post(R"(/session/([0-9a-f]+)/interpolate)", [this, check_tensor, push_history](const httplib::Request& req,
                                                                                     httplib::Response& res) {
    guarded(res, [&] {
      const auto s = find(req.matches[1]);
      const json body = parse_body(req, false);
      if (!body.contains("t") || !body["t"].is_number()) throw FieldError("t", "t must be a number");
      const double t = body["t"];
      if (!std::isfinite(t)) throw FieldError("t", "t must be finite");
      if (!body.contains("other")) throw FieldError("other", "other is required");
      CoocTensor other;
      if (body["other"].is_string()) {
        const auto o = find(body["other"].get<std::string>());
        std::lock_guard lock(o->mutex);
        other = o->tensor;
      } else {
        try {
          other = tensor_from_json(body["other"]);
        } catch (const InvalidArgument& e) {
          throw FieldError("other", e.what());
        }
        check_tensor(other, "other");
        other.set_scale(checkpoint_.stats.scale);
      }
      std::lock_guard lock(s->mutex);
      if (!s->tensor.same_shape(other)) throw FieldError("other", "tensor shapes differ");
      CoocTensor blended = nn::interpolate_tensors(s->tensor, other, t);
      push_history(*s);
      s->tensor = std::move(blended);
      send_json(res, session_json(*s));
    });
  });

  srv.Post(R"(/session/([0-9a-f]+)/undo)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto s = find(req.matches[1]);
      std::lock_guard lock(s->mutex);
      if (s->history.empty()) throw HttpError(409, "nothing to undo");
      s->tensor = std::move(s->history.back());
      s->history.pop_back();
      send_json(res, session_json(*s));
    });
  });
}

}  // namespace cooctex::service
