#pragma once

// Live client for a Read v3.2 compatible endpoint. Enabled only when an
// endpoint and key are supplied (OCR_ENDPOINT / OCR_KEY in the CLI).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <httplib.h>

#include "invoval/image.hpp"
#include "invoval/manifest.hpp"
#include "invoval/ocr.hpp"

namespace invoval {

struct RemoteOcrSettings {
  std::string endpoint;  // scheme://host[:port]
  std::string key;
  int max_in_flight = 4;
  std::chrono::milliseconds poll_interval{1000};
  int max_polls = 120;
  std::chrono::seconds timeout{30};
  std::optional<std::filesystem::path> record_dir;  // raw responses saved as <id>.json
};

/// Reads OCR_ENDPOINT and OCR_KEY; empty when either is unset.
inline std::optional<RemoteOcrSettings> remote_ocr_settings_from_env() {
  const char* ep = std::getenv("OCR_ENDPOINT");
  const char* key = std::getenv("OCR_KEY");
  if (!ep || !key || !*ep || !*key) return std::nullopt;
  RemoteOcrSettings s;
  s.endpoint = ep;
  s.key = key;
  while (!s.endpoint.empty() && s.endpoint.back() == '/') s.endpoint.pop_back();
  return s;
}

/// Submits the page as PNG, polls the operation until it settles, and parses
/// the result. At most `max_in_flight` requests run at once per engine.
class RemoteReadEngine final : public OcrEngine {
 public:
  explicit RemoteReadEngine(RemoteOcrSettings settings)
      : settings_(std::move(settings)), slots_(std::make_unique<std::counting_semaphore<64>>(clamp_slots(settings_.max_in_flight))) {
    if (settings_.endpoint.empty() || settings_.key.empty()) throw Error(ErrorKind::Config, "remote OCR needs an endpoint and a key");
  }

  EngineCapability capability() const override { return EngineCapability::Remote; }
  std::string name() const override { return "azure-read-live"; }

  std::vector<OcrToken> analyze(const DocumentImage& image, std::string_view document_id) override {
    std::vector<std::uint8_t> png;
    cv::Mat bgr;
    cv::cvtColor(as_mat(image), bgr, cv::COLOR_RGB2BGR);
    if (!cv::imencode(".png", bgr, png)) throw Error(ErrorKind::BackendFailure, "cannot encode page image");

    slots_->acquire();
    std::string body;
    try {
      body = submit_and_poll(png);
    } catch (...) {
      slots_->release();
      throw;
    }
    slots_->release();

    if (settings_.record_dir) write_file(*settings_.record_dir / (std::string(document_id) + ".json"), body);
    return clip_tokens(parse_cloud_read_response(body), image.width(), image.height());
  }

 private:
  static std::ptrdiff_t clamp_slots(int n) {
    if (n < 1 || n > 64) throw Error(ErrorKind::Config, "max_in_flight must lie in [1, 64]");
    return n;
  }

  httplib::Client client() const {
    httplib::Client cli(settings_.endpoint);
    cli.set_connection_timeout(settings_.timeout);
    cli.set_read_timeout(settings_.timeout);
    cli.set_default_headers({{"Ocp-Apim-Subscription-Key", settings_.key}});
    return cli;
  }

  std::string submit_and_poll(const std::vector<std::uint8_t>& png) const {
    auto cli = client();
    auto res = cli.Post("/vision/v3.2/read/analyze", reinterpret_cast<const char*>(png.data()), png.size(),
                        "application/octet-stream");
    if (!res) throw Error(ErrorKind::BackendFailure, "read submit failed: " + httplib::to_string(res.error()));
    if (res->status != 202) throw Error(ErrorKind::BackendFailure, "read submit returned HTTP " + std::to_string(res->status));
    const std::string location = res->get_header_value("Operation-Location");
    if (location.empty()) throw Error(ErrorKind::MalformedResponse, "read submit returned no Operation-Location");

    // Operation-Location is absolute; keep only its path for this client.
    std::string path = location;
    if (auto scheme = path.find("://"); scheme != std::string::npos) {
      auto slash = path.find('/', scheme + 3);
      path = slash == std::string::npos ? "/" : path.substr(slash);
    }
    for (int i = 0; i < settings_.max_polls; ++i) {
      auto r = cli.Get(path.c_str());
      if (!r) throw Error(ErrorKind::BackendFailure, "read poll failed: " + httplib::to_string(r.error()));
      if (r->status != 200) throw Error(ErrorKind::BackendFailure, "read poll returned HTTP " + std::to_string(r->status));
      const auto j = nlohmann::json::parse(r->body, nullptr, false);
      if (j.is_discarded()) throw Error(ErrorKind::MalformedResponse, "read poll returned invalid JSON");
      const std::string status = j.value("status", "");
      if (status == "succeeded" || status == "failed") return r->body;
      std::this_thread::sleep_for(settings_.poll_interval);
    }
    throw Error(ErrorKind::BackendFailure, "read operation did not finish in time");
  }

  RemoteOcrSettings settings_;
  std::unique_ptr<std::counting_semaphore<64>> slots_;
};

}  // namespace invoval
