#include "hyqe/service.hpp"

#include <iostream>

#include "httplib.h"

namespace hyqe {

using nlohmann::json;

namespace {

json error_body(const std::string& kind, const std::string& message) {
  return {{"error", kind}, {"message", message}};
}

CandidateList parse_request(const json& j) {
  if (!j.is_object()) throw InvalidInputError("request body must be a JSON object");
  CandidateList list;
  if (!j.contains("query") || !j.at("query").is_string()) throw InvalidInputError("'query' must be a string");
  list.query.text = j.at("query").get<std::string>();
  list.query.id = j.value("query_id", std::string("q"));
  if (!j.contains("candidates") || !j.at("candidates").is_array()) {
    throw InvalidInputError("'candidates' must be an array");
  }
  for (const auto& c : j.at("candidates")) {
    if (!c.is_object() || !c.contains("id") || !c.at("id").is_string() || !c.contains("text") ||
        !c.at("text").is_string() || !c.contains("baseline_score") || !c.at("baseline_score").is_number()) {
      throw InvalidInputError("each candidate needs string id, string text and numeric baseline_score");
    }
    Candidate cand;
    cand.doc.id = c.at("id").get<std::string>();
    cand.doc.text = c.at("text").get<std::string>();
    if (c.contains("title") && c.at("title").is_string() && !c.at("title").get<std::string>().empty()) {
      cand.doc.title = c.at("title").get<std::string>();
    }
    cand.baseline_score = c.at("baseline_score").get<double>();
    list.candidates.push_back(std::move(cand));
  }
  list.validate();
  return list;
}

}  // namespace

RerankService::RerankService(Workspace& workspace) : ws_(workspace) {}

std::pair<int, json> RerankService::handle(const std::string& body) const {
  CandidateList list;
  try {
    list = parse_request(json::parse(body));
  } catch (const json::exception& e) {
    return {400, error_body("ParseError", e.what())};
  } catch (const Error& e) {
    return {400, error_body(e.kind(), e.what())};
  }
  try {
    const auto result = rerank(list, ws_.config().pipeline, ws_.deps());
    json results = json::array();
    for (std::size_t i = 0; i < result.ranking.size(); ++i) {
      const auto& sc = result.ranking[i];
      json row = {{"id", sc.context_id}, {"rank", sc.rank}, {"score", sc.score}};
      if (const auto& b = result.breakdowns[i]) {
        row["qc_term"] = b->qc_term;
        row["qh_term"] = b->qh_term;
      } else {
        row["qc_term"] = nullptr;
        row["qh_term"] = nullptr;
      }
      row["best_hypothetical_query"] =
          result.best_hypothetical_query[i].empty() ? json(nullptr) : json(result.best_hypothetical_query[i]);
      results.push_back(std::move(row));
    }
    json incidents = json::array();
    for (const auto& inc : result.incidents) {
      incidents.push_back({{"context_id", inc.context_id}, {"kind", inc.kind}, {"message", inc.message}});
    }
    return {200, {{"query_id", list.query.id}, {"results", std::move(results)}, {"incidents", std::move(incidents)}}};
  } catch (const ProviderError& e) {
    return {502, error_body(e.kind(), e.what())};
  } catch (const WindowExceededError& e) {
    return {502, error_body(e.kind(), e.what())};
  } catch (const Error& e) {
    return {400, error_body(e.kind(), e.what())};
  }
}

struct RerankHttpServer::Impl {
  explicit Impl(Workspace& ws) : service(ws) {
    server.Post("/rerank", [this](const httplib::Request& req, httplib::Response& res) {
      auto [status, body] = service.handle(req.body);
      res.status = status;
      res.set_content(body.dump(), "application/json");
    });
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
  }

  RerankService service;
  httplib::Server server;
};

RerankHttpServer::RerankHttpServer(Workspace& workspace) : impl_(std::make_unique<Impl>(workspace)) {}

RerankHttpServer::~RerankHttpServer() = default;

int RerankHttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void RerankHttpServer::listen() { impl_->server.listen_after_bind(); }

void RerankHttpServer::stop() { impl_->server.stop(); }

void serve(Workspace& workspace, const std::string& host, int port) {
  RerankHttpServer server(workspace);
  const int bound = server.bind(host, port);
  std::cerr << "listening on " << host << ":" << bound << std::endl;
  server.listen();
}

}  // namespace hyqe
