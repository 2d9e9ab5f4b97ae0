#pragma once

#include <memory>
#include <string>
#include <utility>

#include "json.hpp"

#include "hyqe/commands.hpp"

namespace hyqe {

/// POST /rerank handler, independent of the HTTP layer.
///
/// Request:  {"query": str, "query_id"?: str,
///            "candidates": [{"id": str, "text": str, "title"?: str, "baseline_score": num}]}
/// Response: {"query_id": str,
///            "results": [{"id", "rank", "score", "qc_term", "qh_term",
///                         "best_hypothetical_query"}],
///            "incidents": [...]}
/// Malformed bodies get 400; provider failures in strict mode get 502.
class RerankService {
 public:
  explicit RerankService(Workspace& workspace);

  std::pair<int, nlohmann::json> handle(const std::string& body) const;

 private:
  Workspace& ws_;
};

/// HTTP front end: POST /rerank and GET /health.
class RerankHttpServer {
 public:
  explicit RerankHttpServer(Workspace& workspace);
  ~RerankHttpServer();

  /// Binds the socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Binds and serves until the process is stopped.
void serve(Workspace& workspace, const std::string& host, int port);

}  // namespace hyqe
