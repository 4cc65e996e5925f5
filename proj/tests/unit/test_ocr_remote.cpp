#include <atomic>
#include <future>
#include <map>
#include <mutex>
#include <thread>

#include <gtest/gtest.h>

#include "invoval/ocr_remote.hpp"

using namespace invoval;

namespace {

// Read-compatible stub: each operation reports "running" once, then the
// golden result. Tracks how many operations are open at the same time.
class StubReadServer {
 public:
  explicit StubReadServer(std::string body) : body_(std::move(body)) {
    server_.Post("/vision/v3.2/read/analyze", [this](const httplib::Request& req, httplib::Response& res) {
      if (req.get_header_value("Ocp-Apim-Subscription-Key") != "secret") {
        res.status = 401;
        return;
      }
      std::lock_guard lock(mu_);
      const int id = next_++;
      polls_[id] = 0;
      peak_ = std::max(peak_, static_cast<int>(polls_.size()));
      res.status = 202;
      res.set_header("Operation-Location", base() + "/vision/v3.2/read/analyzeResults/" + std::to_string(id));
    });
    server_.Get(R"(/vision/v3.2/read/analyzeResults/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      const int id = std::stoi(req.matches[1]);
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      std::lock_guard lock(mu_);
      auto it = polls_.find(id);
      if (it == polls_.end()) {
        res.status = 404;
        return;
      }
      if (it->second++ == 0) {
        res.set_content(R"({"status": "running"})", "application/json");
        return;
      }
      polls_.erase(it);
      res.set_content(body_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubReadServer() {
    server_.stop();
    thread_.join();
  }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int peak() {
    std::lock_guard lock(mu_);
    return peak_;
  }

 private:
  httplib::Server server_;
  std::string body_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::map<int, int> polls_;
  int next_ = 0;
  int peak_ = 0;
};

RemoteOcrSettings settings_for(const StubReadServer& s, int in_flight) {
  RemoteOcrSettings cfg;
  cfg.endpoint = s.base();
  cfg.key = "secret";
  cfg.max_in_flight = in_flight;
  cfg.poll_interval = std::chrono::milliseconds(1);
  cfg.timeout = std::chrono::seconds(5);
  return cfg;
}

const std::string kGolden = read_file(std::string(INVOVAL_TEST_DATA) + "/ocr/golden.json");

}  // namespace

TEST(RemoteRead, ParsesPolledResultAndRecordsRawBody) {
  StubReadServer server(kGolden);
  auto cfg = settings_for(server, 4);
  const auto dir = std::filesystem::temp_directory_path() / "invoval_remote_record";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  cfg.record_dir = dir;
  RemoteReadEngine engine(cfg);
  EXPECT_EQ(engine.capability(), EngineCapability::Remote);

  const DocumentImage page(600, 800);
  const auto tokens = engine.analyze(page, "inv-1");
  EXPECT_EQ(tokens, clip_tokens(parse_cloud_read_response(kGolden), 600, 800));
  EXPECT_FALSE(tokens.empty());
  EXPECT_EQ(read_file(dir / "inv-1.json"), kGolden);
  std::filesystem::remove_all(dir);
}

TEST(RemoteRead, InFlightRequestsAreCapped) {
  StubReadServer server(kGolden);
  RemoteReadEngine engine(settings_for(server, 2));
  const DocumentImage page(60, 80);
  std::vector<std::future<std::size_t>> jobs;
  for (int i = 0; i < 8; ++i)
    jobs.push_back(std::async(std::launch::async, [&, i] { return engine.analyze(page, "d" + std::to_string(i)).size(); }));
  for (auto& j : jobs) j.get();
  EXPECT_GE(server.peak(), 1);
  EXPECT_LE(server.peak(), 2);
}

TEST(RemoteRead, WrongKeyIsBackendFailure) {
  StubReadServer server(kGolden);
  auto cfg = settings_for(server, 1);
  cfg.key = "wrong";
  RemoteReadEngine engine(cfg);
  try {
    engine.analyze(DocumentImage(10, 10), "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendFailure);
  }
}

TEST(RemoteRead, UnreachableEndpointIsBackendFailure) {
  RemoteOcrSettings cfg;
  cfg.endpoint = "http://127.0.0.1:1";
  cfg.key = "k";
  cfg.timeout = std::chrono::seconds(1);
  RemoteReadEngine engine(cfg);
  try {
    engine.analyze(DocumentImage(10, 10), "x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BackendFailure);
  }
}

TEST(RemoteRead, SettingsValidated) {
  RemoteOcrSettings cfg;
  EXPECT_THROW(RemoteReadEngine{cfg}, Error);
  cfg.endpoint = "http://x";
  cfg.key = "k";
  cfg.max_in_flight = 0;
  EXPECT_THROW(RemoteReadEngine{cfg}, Error);
}
