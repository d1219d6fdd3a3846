#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "cooctex/cooc.hpp"
#include "cooctex/nn/checkpoint.hpp"

namespace httplib {
class Server;
}

namespace cooctex::service {

/// Single worker thread with a bounded FIFO of pending jobs. The model is
/// owned by whoever submits jobs here; jobs never run concurrently.
class InferenceQueue {
 public:
  explicit InferenceQueue(std::size_t depth);
  ~InferenceQueue();
  InferenceQueue(const InferenceQueue&) = delete;
  InferenceQueue& operator=(const InferenceQueue&) = delete;

  /// Enqueues `job`; false (and the job is dropped) when `depth` jobs are
  /// already waiting. The running job does not count against the bound.
  bool try_submit(std::function<void()> job);

  /// Runs `fn` on the worker and waits for its result; std::nullopt when the
  /// queue is full. Exceptions thrown by `fn` propagate to the caller.
  template <typename F>
  auto run(F fn) -> std::optional<decltype(fn())>;

  std::size_t pending() const;
  std::size_t depth() const { return depth_; }

 private:
  void loop();

  const std::size_t depth_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> jobs_;
  bool stop_ = false;
  std::thread worker_;
};

struct ServiceOptions {
  /// Pending inference jobs beyond the running one; more are answered 503.
  std::size_t queue_depth = 8;
  /// Undo steps kept per session.
  std::size_t history = 100;
  std::string cors_origin = "*";
  std::uint64_t default_seed = 0;
};

/// Editing state of one client. Guarded by its own mutex.
struct Session {
  std::string id;
  CoocTensor tensor;
  std::uint64_t seed = 0;
  std::deque<CoocTensor> history;
  std::mutex mutex;
};

/// HTTP front end over one checkpoint. Routes:
///   GET  /palette
///   POST /session                    crop PNG (image/png body or multipart
///                                    field "crop"), a tensor file
///                                    (application/octet-stream) or JSON
///                                    {"tensor": {...}, "seed": n}
///   GET  /session/{id}/tensor
///   POST /session/{id}/edit          {"bin": [a, b], "factor": f, "cell": [y, x]?}
///   POST /session/{id}/synthesize    {"seed": n}?  -> image/png
///   POST /session/{id}/interpolate   {"other": id | tensor, "t": t}
///   POST /session/{id}/undo
///   DELETE /session/{id}
class Service {
 public:
  Service(nn::ModelCheckpoint checkpoint, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves until stop(); returns false if the port is unavailable.
  bool listen(const std::string& host, int port);
  /// Binds to a free port and serves on a background thread; returns the port.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

  InferenceQueue& queue() { return queue_; }
  const nn::ModelCheckpoint& checkpoint() const { return checkpoint_; }
  std::size_t session_count() const;

 private:
  void install_routes();
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> create(CoocTensor tensor, std::uint64_t seed);

  nn::ModelCheckpoint checkpoint_;
  ServiceOptions options_;
  InferenceQueue queue_;
  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 0;
  std::uint64_t id_salt_ = 0;
};

/// {"shape": [H, W, k, k], "scale": s, "data": [[[[...]]]]} with data
/// nested as [y][x][a][b].
nlohmann::json tensor_to_json(const CoocTensor& tensor);
/// Inverse of tensor_to_json. Throws InvalidArgument on malformed input or
/// unless every position is a symmetric distribution (within 1e-6).
CoocTensor tensor_from_json(const nlohmann::json& j);

template <typename F>
auto InferenceQueue::run(F fn) -> std::optional<decltype(fn())> {
  using R = decltype(fn());
  auto task = std::make_shared<std::packaged_task<R()>>(std::move(fn));
  auto future = task->get_future();
  if (!try_submit([task] { (*task)(); })) return std::nullopt;
  return future.get();
}

}  // namespace cooctex::service
