#pragma once

#include <map>
#include <string>
#include <vector>

#include "hyqe/core.hpp"

namespace hyqe {

/// Graded relevance judgments; unjudged pairs are grade 0.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> judgments;  // query -> doc -> grade

  const std::map<std::string, int>& grades_for(const std::string& query_id) const;
};

struct RankedRun {
  std::string tag = "run";
  std::map<std::string, std::vector<ScoredContext>> rankings;  // query -> ordered list

  friend bool operator==(const RankedRun&, const RankedRun&) = default;
};

/// DCG with gain 2^grade - 1 and discount log2(i + 1), normalized by the
/// ideal DCG over every judged document of the query. 0 when no document
/// has a positive grade.
double ndcg_at_k(const std::vector<std::string>& ranking, const std::map<std::string, int>& grades,
                 std::size_t k);

struct EvaluationReport {
  std::size_t k = 10;
  std::map<std::string, double> per_query;
  double mean = 0.0;
  std::vector<std::string> skipped;  // judged queries with no positive grade
  std::vector<std::string> missing;  // judged queries absent from the run (scored 0)

  /// "query<TAB>ndcg@k" lines followed by "all<TAB>mean", 4 decimals.
  std::string to_text() const;
};

/// Macro-average NDCG@k over judged queries with at least one positive
/// grade. Throws EmptyEvaluationError when run and qrels share no query.
EvaluationReport evaluate(const RankedRun& run, const Qrels& qrels, std::size_t k);

/// Ids and documents in file order.
struct Corpus {
  std::vector<ContextDoc> docs;
  std::map<std::string, std::size_t> index;

  const ContextDoc* find(const std::string& id) const;
};

/// JSON lines with _id, optional title, text.
Corpus load_corpus(const std::string& path);
Corpus parse_corpus(std::istream& in, const std::string& source = "<corpus>");

/// JSON lines with _id, text.
std::vector<Query> load_queries(const std::string& path);
std::vector<Query> parse_queries_jsonl(std::istream& in, const std::string& source = "<queries>");

/// "query_id iteration doc_id grade" lines, or the TSV variant with a
/// "query-id corpus-id score" header.
Qrels load_qrels(const std::string& path);
Qrels parse_qrels(std::istream& in, const std::string& source = "<qrels>");
void write_qrels(const Qrels& qrels, std::ostream& out);

/// TREC six-column run: "query_id Q0 doc_id rank score tag".
RankedRun read_run(const std::string& path);
RankedRun parse_run(std::istream& in, const std::string& source = "<run>");
void write_run(const RankedRun& run, std::ostream& out);
void write_run(const RankedRun& run, const std::string& path);

}  // namespace hyqe
