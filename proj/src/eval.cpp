#include "hyqe/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace hyqe {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return in;
}

std::string json_id(const nlohmann::json& j, const std::string& source, std::size_t line_no) {
  const auto it = j.find("_id");
  if (it == j.end()) throw ParseError(source, line_no, "missing _id");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw ParseError(source, line_no, "_id must be a string or integer");
}

nlohmann::json parse_json_line(const std::string& line, const std::string& source, std::size_t line_no) {
  try {
    auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw ParseError(source, line_no, "expected a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
  }
}

double dcg_term(int grade, std::size_t position) {
  return (std::pow(2.0, grade) - 1.0) / std::log2(static_cast<double>(position) + 1.0);
}

std::string format4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

const std::map<std::string, int>& Qrels::grades_for(const std::string& query_id) const {
  static const std::map<std::string, int> kEmpty;
  const auto it = judgments.find(query_id);
  return it == judgments.end() ? kEmpty : it->second;
}

double ndcg_at_k(const std::vector<std::string>& ranking, const std::map<std::string, int>& grades,
                 std::size_t k) {
  if (k < 1) throw PreconditionError("k must be >= 1");
  std::vector<int> ideal;
  ideal.reserve(grades.size());
  for (const auto& [doc, g] : grades) ideal.push_back(std::max(g, 0));
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += dcg_term(ideal[i], i + 1);
  if (idcg <= 0.0) return 0.0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    const auto it = grades.find(ranking[i]);
    if (it != grades.end() && it->second > 0) dcg += dcg_term(it->second, i + 1);
  }
  return dcg / idcg;
}

std::string EvaluationReport::to_text() const {
  std::string out;
  for (const auto& [qid, v] : per_query) out += qid + "\tndcg@" + std::to_string(k) + "\t" + format4(v) + "\n";
  out += "all\tndcg@" + std::to_string(k) + "\t" + format4(mean) + "\n";
  return out;
}

EvaluationReport evaluate(const RankedRun& run, const Qrels& qrels, std::size_t k) {
  EvaluationReport report;
  report.k = k;
  bool any_shared = false;
  for (const auto& [qid, grades] : qrels.judgments) {
    const bool has_positive = std::any_of(grades.begin(), grades.end(), [](const auto& g) { return g.second > 0; });
    const auto it = run.rankings.find(qid);
    if (it != run.rankings.end()) any_shared = true;
    if (!has_positive) {
      report.skipped.push_back(qid);
      continue;
    }
    if (it == run.rankings.end()) {
      report.missing.push_back(qid);
      report.per_query[qid] = 0.0;
      continue;
    }
    std::vector<std::string> ids;
    ids.reserve(it->second.size());
    for (const auto& sc : it->second) ids.push_back(sc.context_id);
    report.per_query[qid] = ndcg_at_k(ids, grades, k);
  }
  if (!any_shared || report.per_query.empty()) {
    throw EmptyEvaluationError("run and qrels share no evaluable query");
  }
  double sum = 0.0;
  for (const auto& [qid, v] : report.per_query) sum += v;
  report.mean = sum / static_cast<double>(report.per_query.size());
  return report;
}

const ContextDoc* Corpus::find(const std::string& id) const {
  const auto it = index.find(id);
  return it == index.end() ? nullptr : &docs[it->second];
}

Corpus parse_corpus(std::istream& in, const std::string& source) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto j = parse_json_line(line, source, line_no);
    ContextDoc doc;
    doc.id = json_id(j, source, line_no);
    const auto text = j.find("text");
    if (text == j.end() || !text->is_string()) throw ParseError(source, line_no, "missing string field text");
    doc.text = text->get<std::string>();
    if (const auto title = j.find("title"); title != j.end() && title->is_string() && !title->get<std::string>().empty()) {
      doc.title = title->get<std::string>();
    }
    if (corpus.index.contains(doc.id)) {
      throw DuplicateIdError(source + ":" + std::to_string(line_no) + ": duplicate document id '" + doc.id + "'");
    }
    corpus.index.emplace(doc.id, corpus.docs.size());
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) {
  auto in = open_input(path);
  return parse_corpus(in, path);
}

std::vector<Query> parse_queries_jsonl(std::istream& in, const std::string& source) {
  std::vector<Query> queries;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto j = parse_json_line(line, source, line_no);
    Query q;
    q.id = json_id(j, source, line_no);
    const auto text = j.find("text");
    if (text == j.end() || !text->is_string()) throw ParseError(source, line_no, "missing string field text");
    q.text = text->get<std::string>();
    if (trim(q.text).empty()) throw ParseError(source, line_no, "empty query text");
    if (!seen.insert(q.id).second) {
      throw DuplicateIdError(source + ":" + std::to_string(line_no) + ": duplicate query id '" + q.id + "'");
    }
    queries.push_back(std::move(q));
  }
  return queries;
}

std::vector<Query> load_queries(const std::string& path) {
  auto in = open_input(path);
  return parse_queries_jsonl(in, path);
}

Qrels parse_qrels(std::istream& in, const std::string& source) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    int grade = 0;
    if (first) {
      first = false;
      if (fields.size() == 3 && !parse_number(fields[2], grade)) continue;  // "query-id corpus-id score"
    }
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError(source, line_no, "expected 3 or 4 fields, got " + std::to_string(fields.size()));
    }
    const auto qid = std::string(fields[0]);
    const auto doc = std::string(fields[fields.size() == 4 ? 2 : 1]);
    if (!parse_number(fields.back(), grade)) {
      throw ParseError(source, line_no, "grade '" + std::string(fields.back()) + "' is not an integer");
    }
    if (grade < 0) throw ParseError(source, line_no, "negative grade");
    if (!qrels.judgments[qid].emplace(doc, grade).second) {
      throw DuplicateIdError(source + ":" + std::to_string(line_no) + ": duplicate judgment (" + qid + ", " + doc + ")");
    }
  }
  return qrels;
}

Qrels load_qrels(const std::string& path) {
  auto in = open_input(path);
  return parse_qrels(in, path);
}

void write_qrels(const Qrels& qrels, std::ostream& out) {
  for (const auto& [qid, grades] : qrels.judgments) {
    for (const auto& [doc, grade] : grades) out << qid << " 0 " << doc << ' ' << grade << '\n';
  }
}

RankedRun parse_run(std::istream& in, const std::string& source) {
  RankedRun run;
  std::map<std::string, std::unordered_set<std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  bool have_tag = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 6) {
      throw ParseError(source, line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    }
    std::size_t rank = 0;
    double score = 0.0;
    if (!parse_number(fields[3], rank) || rank == 0) {
      throw ParseError(source, line_no, "rank '" + std::string(fields[3]) + "' is not a positive integer");
    }
    if (!parse_number(fields[4], score) || !std::isfinite(score)) {
      throw ParseError(source, line_no, "score '" + std::string(fields[4]) + "' is not a finite number");
    }
    const std::string qid(fields[0]);
    std::string doc(fields[2]);
    auto& list = run.rankings[qid];
    if (rank != list.size() + 1) {
      throw ParseError(source, line_no, "rank " + std::to_string(rank) + " for query " + qid + ", expected " +
                                            std::to_string(list.size() + 1));
    }
    if (!list.empty() && score > list.back().score) {
      throw ParseError(source, line_no, "score increases with rank for query " + qid);
    }
    if (!seen[qid].insert(doc).second) {
      throw DuplicateIdError(source + ":" + std::to_string(line_no) + ": duplicate document '" + doc +
                             "' for query " + qid);
    }
    if (!have_tag) {
      run.tag = std::string(fields[5]);
      have_tag = true;
    }
    list.push_back({std::move(doc), score, rank});
  }
  return run;
}

RankedRun read_run(const std::string& path) {
  auto in = open_input(path);
  return parse_run(in, path);
}

void write_run(const RankedRun& run, std::ostream& out) {
  for (const auto& [qid, list] : run.rankings) {
    for (const auto& sc : list) {
      out << qid << " Q0 " << sc.context_id << ' ' << sc.rank << ' ' << format_double(sc.score) << ' ' << run.tag
          << '\n';
    }
  }
}

void write_run(const RankedRun& run, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  write_run(run, out);
}

}  // namespace hyqe
