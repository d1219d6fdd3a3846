#include "support/torch_doctest.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <future>
#include <sstream>
#include <thread>

#include "cooctex/error.hpp"
#include "cooctex/image.hpp"
#include "cooctex/nn/synthesis.hpp"
#include "cooctex/service/service.hpp"
#include "cooctex/stats_bundle.hpp"
#include "support/oracles.hpp"
#include "support/tiny_model.hpp"

using namespace cooctex;
using namespace cooctex::service;
using nlohmann::json;

namespace {

CoocTensor uniform_tensor(int h, int w, int k, int scale = 32) {
  CoocTensor t(h, w, k, scale);
  for (double& v : t.values()) v = 1.0 / (k * k);
  return t;
}

json as_json(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

CoocMatrix matrix_at(const json& session, int y, int x) {
  const json& m = session["tensor"]["data"][y][x];
  const int k = static_cast<int>(m.size());
  CoocMatrix out(k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) out(a, b) = m[a][b];
  return out;
}

struct Fixture {
  Service service;
  int port;
  httplib::Client client;

  explicit Fixture(ServiceOptions options = {})
      : service(fixtures::tiny_checkpoint(2, 3), options),
        port(service.start_background()),
        client("127.0.0.1", port) {
    client.set_read_timeout(60, 0);
  }

  std::string create(const CoocTensor& t, std::uint64_t seed = 5) {
    const auto r = client.Post("/session", json{{"tensor", tensor_to_json(t)}, {"seed", seed}}.dump(),
                               "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return json::parse(r->body)["id"];
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client.Post(path, body.dump(), "application/json");
  }
};

}  // namespace

TEST_CASE("tensor JSON round trip and validation") {
  CoocTensor t(2, 3, 2, 32);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      const double d = 0.1 * (y + 1) + 0.05 * x;
      t.set_matrix(y, x, CoocMatrix(2, {d, 0.2, 0.2, 0.6 - d}));
    }
  const json j = tensor_to_json(t);
  CHECK(j["shape"] == json({2, 3, 2, 2}));
  CHECK(tensor_from_json(json::parse(j.dump())) == t);

  json bad = j;
  bad["data"][0][0][0][1] = 0.3;  // asymmetric and not unit-sum
  CHECK_THROWS_AS(tensor_from_json(bad), InvalidArgument);
  bad = j;
  bad["shape"] = {2, 3, 2};
  CHECK_THROWS_AS(tensor_from_json(bad), InvalidArgument);
  bad = j;
  bad["data"][1].erase(0);
  CHECK_THROWS_AS(tensor_from_json(bad), InvalidArgument);
}

TEST_CASE("inference queue runs jobs in order and rejects beyond its bound") {
  InferenceQueue q(2);
  std::promise<void> release;
  std::shared_future<void> gate = release.get_future().share();
  std::atomic<bool> running{false};
  REQUIRE(q.try_submit([&] {
    running = true;
    gate.wait();
  }));
  while (!running) std::this_thread::yield();
  std::vector<int> order;
  std::mutex m;
  CHECK(q.try_submit([&] { std::lock_guard l(m); order.push_back(1); }));
  CHECK(q.try_submit([&] { std::lock_guard l(m); order.push_back(2); }));
  CHECK_FALSE(q.try_submit([&] { order.push_back(3); }));
  CHECK(q.pending() == 2);
  release.set_value();
  while (q.pending() > 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  CHECK(q.run([] { return 42; }) == std::optional<int>(42));
  CHECK(order == std::vector<int>{1, 2});
  CHECK_THROWS_AS(q.run([]() -> int { throw InvalidArgument("boom"); }), InvalidArgument);
}

TEST_CASE("palette endpoint and CORS headers") {
  Fixture f;
  const auto r = f.client.Get("/palette");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
  const json p = json::parse(r->body);
  CHECK(p["k"] == 2);
  CHECK(p["centers"].size() == 2);
  CHECK(p["spreads"][1].size() == 3);
  const auto pre = f.client.Options("/session");
  REQUIRE(pre);
  CHECK(pre->status == 204);
}

TEST_CASE("sessions: create, edit, undo, synthesize") {
  Fixture f;
  const CoocTensor start = uniform_tensor(1, 2, 2);
  const std::string id = f.create(start, 9);

  const json initial = as_json(f.client.Get("/session/" + id + "/tensor"));
  CHECK(initial["seed"] == 9);
  CHECK(tensor_from_json(initial["tensor"]) == start);

  const auto png0 = f.client.Post("/session/" + id + "/synthesize", "", "application/json");
  REQUIRE(png0);
  CHECK(png0->status == 200);
  CHECK(png0->get_header_value("Content-Type") == "image/png");
  const Image decoded = decode_image({reinterpret_cast<const std::uint8_t*>(png0->body.data()), png0->body.size()});
  CHECK(decoded.height() == 32);
  CHECK(decoded.width() == 64);
  CHECK(decoded == quantize8(nn::synthesize(f.service.checkpoint(), start, 9)));

  // factor = 1 leaves the image byte-identical.
  const json same = as_json(f.post("/session/" + id + "/edit", {{"bin", {0, 1}}, {"factor", 1.0}}));
  CHECK(tensor_from_json(same["tensor"]) == start);
  const auto png1 = f.client.Post("/session/" + id + "/synthesize", "", "application/json");
  CHECK(png1->body == png0->body);

  // Two edits of (0,0); each result is a symmetric distribution and the bin grows.
  double previous = start.matrix(0, 0)(0, 0);
  json state;
  for (double factor : {2.0, 3.0}) {
    state = as_json(f.post("/session/" + id + "/edit", {{"bin", {0, 0}}, {"factor", factor}}));
    for (int x = 0; x < 2; ++x) {
      const CoocMatrix m = matrix_at(state, 0, x);
      CHECK(m.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(m.asymmetry() <= 1e-12);
    }
    CHECK(matrix_at(state, 0, 0)(0, 0) > previous);
    previous = matrix_at(state, 0, 0)(0, 0);
  }
  const CoocMatrix expected = nn::edit_bin(nn::edit_bin(start.matrix(0, 0), 0, 0, 2.0), 0, 0, 3.0);
  CHECK(matrix_at(state, 0, 1) == expected);
  CHECK(state["history"] == 3);

  // Single-cell edit touches only that cell.
  const json local = as_json(f.post("/session/" + id + "/edit", {{"bin", {1, 1}}, {"factor", 4.0}, {"cell", {0, 1}}}));
  CHECK(matrix_at(local, 0, 0) == matrix_at(state, 0, 0));
  CHECK_FALSE(matrix_at(local, 0, 1) == matrix_at(state, 0, 1));

  // Undo is an exact inverse, step by step.
  CHECK(as_json(f.post("/session/" + id + "/undo", json::object()))["tensor"] == state["tensor"]);
  as_json(f.post("/session/" + id + "/undo", json::object()));
  as_json(f.post("/session/" + id + "/undo", json::object()));
  const json back = as_json(f.post("/session/" + id + "/undo", json::object()));
  CHECK(tensor_from_json(back["tensor"]) == start);
  CHECK(f.post("/session/" + id + "/undo", json::object())->status == 409);
  const auto png2 = f.client.Post("/session/" + id + "/synthesize", "", "application/json");
  CHECK(png2->body == png0->body);

  const auto other_seed = f.post("/session/" + id + "/synthesize", {{"seed", 10}});
  CHECK(other_seed->get_header_value("X-Seed") == "10");
  CHECK(other_seed->body != png0->body);
}

TEST_CASE("validation errors carry field names") {
  Fixture f;
  const std::string id = f.create(uniform_tensor(1, 1, 2));
  auto field_of = [&](const json& body) {
    const auto r = f.post("/session/" + id + "/edit", body);
    REQUIRE(r);
    CHECK(r->status == 422);
    return json::parse(r->body).value("field", "");
  };
  CHECK(field_of({{"bin", {0, 2}}, {"factor", 2.0}}) == "bin");
  CHECK(field_of({{"bin", {0}}, {"factor", 2.0}}) == "bin");
  CHECK(field_of({{"factor", 2.0}}) == "bin");
  CHECK(field_of({{"bin", {0, 1}}, {"factor", -1.0}}) == "factor");
  CHECK(field_of({{"bin", {0, 1}}, {"factor", "big"}}) == "factor");
  CHECK(field_of({{"bin", {0, 1}}, {"factor", 2.0}, {"cell", {3, 0}}}) == "cell");

  CHECK(f.client.Get("/session/deadbeef/tensor")->status == 404);
  CHECK(f.post("/session/deadbeef/edit", {{"bin", {0, 0}}, {"factor", 2.0}})->status == 404);
  CHECK(f.post("/session/" + id + "/edit", json::array())->status == 400);

  const auto wrong_k = f.post("/session", {{"tensor", tensor_to_json(uniform_tensor(1, 1, 4))}});
  CHECK(wrong_k->status == 422);
  CHECK(json::parse(wrong_k->body)["field"] == "tensor");
  const auto no_tensor = f.post("/session", {{"seed", 1}});
  CHECK(no_tensor->status == 422);
  const auto bad_png = f.client.Post("/session", "not a png", "image/png");
  CHECK(bad_png->status == 422);
  CHECK(json::parse(bad_png->body)["field"] == "crop");
}

TEST_CASE("sessions from crops and tensor files; interpolation; isolation") {
  Fixture f;
  const StatsBundle& stats = f.service.checkpoint().stats;
  const Image crop = quantize8(fixtures::random_image(32, 64, stats.palette.centers, 0.05, 4));
  const std::vector<std::uint8_t> png = encode_png(crop);
  const auto r = f.client.Post("/session", std::string(png.begin(), png.end()), "image/png");
  REQUIRE(r);
  REQUIRE(r->status == 201);
  const json from_crop = json::parse(r->body);
  CHECK(tensor_from_json(from_crop["tensor"]) == cooc_tensor(crop, stats.palette, stats.params, stats.scale));

  httplib::MultipartFormDataItems items{{"crop", std::string(png.begin(), png.end()), "crop.png", "image/png"}};
  const auto multipart = f.client.Post("/session", items);
  REQUIRE(multipart);
  CHECK(multipart->status == 201);

  const CoocTensor stored = uniform_tensor(1, 2, 2);
  std::ostringstream file;
  write_tensor(file, stored);
  const auto from_file = f.client.Post("/session", file.str(), "application/octet-stream");
  REQUIRE(from_file);
  REQUIRE(from_file->status == 201);
  const std::string a = json::parse(from_file->body)["id"];
  const std::string b = from_crop["id"];

  // Interpolating towards another session; that session is not modified.
  const json before_b = as_json(f.client.Get("/session/" + b + "/tensor"));
  const json mixed = as_json(f.post("/session/" + a + "/interpolate", {{"other", b}, {"t", 0.25}}));
  const CoocTensor expected = nn::interpolate_tensors(stored, tensor_from_json(before_b["tensor"]), 0.25);
  CHECK(l1_distance(tensor_from_json(mixed["tensor"]), expected) <= 1e-12);
  CHECK(as_json(f.client.Get("/session/" + b + "/tensor")) == before_b);
  CHECK(f.post("/session/" + a + "/interpolate", {{"other", "0"}, {"t", 0.5}})->status == 404);
  CHECK(f.post("/session/" + a + "/interpolate", {{"other", b}})->status == 422);
  const auto shape = f.post("/session/" + a + "/interpolate",
                            {{"other", tensor_to_json(uniform_tensor(2, 2, 2))}, {"t", 0.5}});
  CHECK(json::parse(shape->body)["field"] == "other");

  // Edits in one session never reach another.
  f.post("/session/" + b + "/edit", {{"bin", {0, 0}}, {"factor", 5.0}});
  CHECK(tensor_from_json(as_json(f.client.Get("/session/" + a + "/tensor"))["tensor"]) ==
        tensor_from_json(mixed["tensor"]));

  CHECK(f.client.Delete("/session/" + a)->status == 204);
  CHECK(f.client.Get("/session/" + a + "/tensor")->status == 404);
}

TEST_CASE("history is bounded") {
  ServiceOptions options;
  options.history = 3;
  Fixture f(options);
  const std::string id = f.create(uniform_tensor(1, 1, 2));
  for (int i = 0; i < 5; ++i) f.post("/session/" + id + "/edit", {{"bin", {0, 1}}, {"factor", 1.5}});
  CHECK(as_json(f.client.Get("/session/" + id + "/tensor"))["history"] == 3);
  for (int i = 0; i < 3; ++i) CHECK(f.post("/session/" + id + "/undo", json::object())->status == 200);
  CHECK(f.post("/session/" + id + "/undo", json::object())->status == 409);
}

TEST_CASE("a full inference queue answers 503 while edits keep working") {
  ServiceOptions options;
  options.queue_depth = 1;
  Fixture f(options);
  const std::string id = f.create(uniform_tensor(1, 1, 2));

  std::promise<void> release;
  std::shared_future<void> gate = release.get_future().share();
  std::atomic<bool> running{false};
  REQUIRE(f.service.queue().try_submit([&] {
    running = true;
    gate.wait();
  }));
  while (!running) std::this_thread::yield();
  REQUIRE(f.service.queue().try_submit([] {}));  // fills the single pending slot

  const auto busy = f.client.Post("/session/" + id + "/synthesize", "", "application/json");
  REQUIRE(busy);
  CHECK(busy->status == 503);
  CHECK(f.post("/session/" + id + "/edit", {{"bin", {0, 1}}, {"factor", 2.0}})->status == 200);

  release.set_value();
  while (f.service.queue().pending() > 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  const auto ok = f.client.Post("/session/" + id + "/synthesize", "", "application/json");
  REQUIRE(ok);
  CHECK(ok->status == 200);
}

TEST_CASE("concurrent clients on separate sessions") {
  Fixture f;
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(f.create(uniform_tensor(1, 1, 2), i));
  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int i = 0; i < 4; ++i)
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", f.port);
      for (int step = 0; step < 10; ++step) {
        const auto r = c.Post("/session/" + ids[i] + "/edit",
                              json{{"bin", {i % 2, 1}}, {"factor", 1.0 + i}}.dump(), "application/json");
        if (!r || r->status != 200) ++failures;
      }
    });
  for (auto& t : threads) t.join();
  CHECK(failures == 0);
  for (int i = 0; i < 4; ++i) {
    CoocMatrix expected = uniform_tensor(1, 1, 2).matrix(0, 0);
    for (int step = 0; step < 10; ++step) expected = nn::edit_bin(expected, i % 2, 1, 1.0 + i);
    const CoocMatrix got = matrix_at(as_json(f.client.Get("/session/" + ids[i] + "/tensor")), 0, 0);
    CHECK(l1_distance(got, expected) <= 1e-12);
  }
}
