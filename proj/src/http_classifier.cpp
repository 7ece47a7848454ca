// SPDX-License-Identifier: Apache-2.0

#include <httplib.h>

#include <cmath>

#include "infill/adapters.hpp"
#include "infill/entailment.hpp"
#include "infill/json_io.hpp"

namespace infill {

EntailmentVerdict parse_classifier_response(std::string_view body) {
  auto j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ClassifierUnavailable, "response is not a JSON object");
  if (!j.contains("label") || !j["label"].is_string()) throw Error(ErrorCode::ClassifierUnavailable, "response has no label");
  if (!j.contains("scores") || !j["scores"].is_array() || j["scores"].size() != 3) {
    throw Error(ErrorCode::ClassifierUnavailable, "response needs three scores");
  }
  std::array<double, 3> scores{};
  double sum = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j["scores"][i].is_number()) throw Error(ErrorCode::ClassifierUnavailable, "scores must be numbers");
    scores[i] = j["scores"][i].get<double>();
    if (scores[i] < 0 || scores[i] > 1) throw Error(ErrorCode::ClassifierUnavailable, "score outside [0, 1]");
    sum += scores[i];
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error(ErrorCode::ClassifierUnavailable, "scores do not sum to 1");
  const auto label = label_from_string(j["label"].get<std::string>());
  return {label, scores[static_cast<std::size_t>(label)]};
}

HttpClassifier::HttpClassifier(HttpClassifierConfig config)
    : config_(std::move(config)), in_flight_(std::clamp(config_.max_in_flight, 1, 1024)) {
  parse_url(config_.url);
}

EntailmentVerdict HttpClassifier::classify(std::string_view premise, std::string_view hypothesis) {
  struct Slot {
    std::counting_semaphore<1024>& s;
    explicit Slot(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
    ~Slot() { s.release(); }
  } slot(in_flight_);

  auto url = parse_url(config_.url);
  httplib::Client client(url.scheme_host_port);
  const auto usec = static_cast<long>(config_.timeout_seconds * 1e6);
  client.set_read_timeout(usec / 1'000'000, usec % 1'000'000);
  client.set_connection_timeout(5, 0);

  Json body{{"premise", premise}, {"hypothesis", hypothesis}};
  auto res = client.Post(url.path, body.dump(), "application/json");
  if (!res) throw Error(ErrorCode::ClassifierUnavailable, httplib::to_string(res.error()));
  if (res->status != 200) throw Error(ErrorCode::ClassifierUnavailable, "HTTP " + std::to_string(res->status));
  return parse_classifier_response(res->body);
}

}  // namespace infill
