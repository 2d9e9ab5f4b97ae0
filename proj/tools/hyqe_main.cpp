// Command-line front end: pregen, rank, eval, sweep, downsample,
// export-embeddings, serve.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hyqe/commands.hpp"
#include "hyqe/config.hpp"
#include "hyqe/service.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> cache_dir;
  std::string manifest_path;
  std::optional<double> lambda;
  std::optional<std::size_t> k;
  std::optional<std::size_t> depth;
  std::optional<std::string> aggregation;
  std::optional<std::string> qc_mode;
  std::optional<std::string> qh_mode;
  std::optional<std::string> template_id;
  std::optional<std::string> hyde;
  std::optional<std::size_t> hyde_n;
  std::optional<double> downsample_ratio;
  std::optional<std::uint64_t> downsample_seed;
  std::optional<std::size_t> eval_k;
  bool strict = false;
  bool mock = false;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_cache = true) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  if (with_cache) cmd->add_option("--cache", o.cache_dir, "hypothetical-query store directory");
  cmd->add_option("--manifest", o.manifest_path, "write the run manifest here (default: stderr)");
  cmd->add_option("--lambda", o.lambda, "weight of the hypothetical-query term");
  cmd->add_option("--k", o.k, "number of candidates to rerank");
  cmd->add_option("--depth", o.depth, "candidates read per query from the baseline run");
  cmd->add_option("--aggregation", o.aggregation, "max or mean")->check(CLI::IsMember({"max", "mean"}));
  cmd->add_option("--qc-mode", o.qc_mode, "cosine or inner_product")->check(CLI::IsMember({"cosine", "inner_product"}));
  cmd->add_option("--qh-mode", o.qh_mode, "cosine or inner_product")->check(CLI::IsMember({"cosine", "inner_product"}));
  cmd->add_option("--template", o.template_id, "prompt template id");
  cmd->add_option("--hyde", o.hyde, "off, plus or times")->check(CLI::IsMember({"off", "plus", "times"}));
  cmd->add_option("--hyde-n", o.hyde_n, "hypothetical contexts per query in times mode");
  cmd->add_option("--downsample-ratio", o.downsample_ratio, "keep this fraction of each H(c)");
  cmd->add_option("--downsample-seed", o.downsample_seed, "seed for --downsample-ratio");
  cmd->add_option("--eval-k", o.eval_k, "NDCG cutoff");
  cmd->add_flag("--strict", o.strict, "abort on provider failure instead of falling back");
  cmd->add_flag("--mock", o.mock, "use deterministic offline providers");
}

hyqe::AppConfig build_config(const Overrides& o) {
  hyqe::AppConfig cfg = o.config_path.empty() ? hyqe::AppConfig{} : hyqe::load_config(o.config_path);
  auto& p = cfg.pipeline;
  if (o.lambda) {
    p.score.lambda = *o.lambda;
    cfg.lambda_set = true;
  }
  if (o.k) p.k = *o.k;
  if (o.depth) p.retrieval_depth = *o.depth;
  if (o.aggregation) p.score.aggregation = hyqe::aggregation_from_string(*o.aggregation);
  if (o.qc_mode) p.score.qc_mode = hyqe::similarity_mode_from_string(*o.qc_mode);
  if (o.qh_mode) p.score.qh_mode = hyqe::similarity_mode_from_string(*o.qh_mode);
  if (o.template_id) p.template_id = *o.template_id;
  if (o.hyde) p.hyde = hyqe::hyde_mode_from_string(*o.hyde);
  if (o.hyde_n) p.hyde_n_contexts = *o.hyde_n;
  if (o.downsample_ratio || o.downsample_seed) {
    if (!o.downsample_ratio || !o.downsample_seed) {
      throw hyqe::ConfigError("--downsample-ratio and --downsample-seed go together");
    }
    p.score.downsample = hyqe::DownsampleConfig{*o.downsample_ratio, *o.downsample_seed};
  }
  if (o.eval_k) cfg.eval_k = *o.eval_k;
  if (o.strict) p.strict = true;
  if (o.mock) cfg.providers.kind = "mock";
  return cfg;
}

void emit_manifest(const hyqe::RunManifest& m, const std::string& path) {
  if (path.empty()) {
    std::cerr << "manifest: " << m.to_json().dump() << '\n';
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw hyqe::Error("cannot write manifest " + path);
  out << m.to_json().dump(2) << '\n';
}

void print_error(const char* kind, const std::string& message, std::size_t line = 0) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  if (line > 0) j["line"] = line;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rerank retrieved contexts with generated hypothetical queries"};
  app.require_subcommand(1);

  Overrides o;
  hyqe::RankInputs in;
  std::string out_path, qrels_path, run_path, host = "127.0.0.1";
  std::vector<double> lambdas{0.0, 0.5, 1.0};
  std::vector<double> ratios{0.1, 0.5, 1.0};
  std::size_t trials = 5, eval_k = 10;
  std::uint64_t seed = 0;
  int port = 8080;

  auto* pregen = app.add_subcommand("pregen", "generate and store H(c) for every corpus context");
  add_common(pregen, o);
  pregen->add_option("--corpus", in.corpus_path, "corpus JSONL")->required();

  auto add_rank_inputs = [&](CLI::App* cmd) {
    add_common(cmd, o);
    cmd->add_option("--corpus", in.corpus_path, "corpus JSONL")->required();
    cmd->add_option("--queries", in.queries_path, "queries JSONL")->required();
    cmd->add_option("--run", in.baseline_run_path, "baseline TREC run")->required();
  };

  auto* rank = app.add_subcommand("rank", "rerank a baseline run");
  add_rank_inputs(rank);
  rank->add_option("--out", out_path, "output TREC run")->required();

  auto* eval = app.add_subcommand("eval", "NDCG@k of a run against qrels");
  eval->add_option("--run", run_path, "TREC run")->required();
  eval->add_option("--qrels", qrels_path, "qrels file")->required();
  eval->add_option("--k", eval_k, "cutoff");
  eval->add_option("--manifest", o.manifest_path, "write the run manifest here (default: stderr)");

  auto* sweep = app.add_subcommand("sweep", "mean NDCG@k for several lambda values");
  add_rank_inputs(sweep);
  sweep->add_option("--qrels", qrels_path, "qrels file")->required();
  sweep->add_option("--lambdas", lambdas, "lambda values")->delimiter(',');

  auto* down = app.add_subcommand("downsample", "mean NDCG@k with randomly downsampled H(c)");
  add_rank_inputs(down);
  down->add_option("--qrels", qrels_path, "qrels file")->required();
  down->add_option("--ratios", ratios, "kept fractions")->delimiter(',');
  down->add_option("--trials", trials, "seeds averaged per ratio");
  down->add_option("--seed", seed, "first seed");

  auto* exp = app.add_subcommand("export-embeddings", "write query, context and hypothetical-query embeddings");
  add_rank_inputs(exp);
  exp->add_option("--out", out_path, "output TSV")->required();

  auto* srv = app.add_subcommand("serve", "serve POST /rerank");
  add_common(srv, o);
  srv->add_option("--host", host, "bind address");
  srv->add_option("--port", port, "bind port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (eval->parsed()) {
      hyqe::EvaluationReport report;
      const auto m = hyqe::cmd_eval(run_path, qrels_path, eval_k, &report);
      std::cout << report.to_text();
      emit_manifest(m, o.manifest_path);
      return 0;
    }
    auto ws = hyqe::Workspace::from_config(build_config(o), o.cache_dir);
    if (pregen->parsed()) {
      emit_manifest(hyqe::cmd_pregen(ws, in.corpus_path), o.manifest_path);
    } else if (rank->parsed()) {
      emit_manifest(hyqe::cmd_rank(ws, in, out_path), o.manifest_path);
    } else if (sweep->parsed()) {
      std::vector<hyqe::SweepRow> rows;
      const auto m = hyqe::cmd_sweep(ws, in, qrels_path, lambdas, &rows);
      std::cout << hyqe::format_sweep_table(rows, ws.config().eval_k);
      emit_manifest(m, o.manifest_path);
    } else if (down->parsed()) {
      std::vector<hyqe::DownsampleRow> rows;
      const auto m = hyqe::cmd_downsample(ws, in, qrels_path, ratios, trials, seed, &rows);
      std::cout << hyqe::format_downsample_table(rows, ws.config().eval_k);
      emit_manifest(m, o.manifest_path);
    } else if (exp->parsed()) {
      emit_manifest(hyqe::cmd_export_embeddings(ws, in, out_path), o.manifest_path);
    } else if (srv->parsed()) {
      hyqe::serve(ws, host, port);
    }
    return 0;
  } catch (const hyqe::ParseError& e) {
    print_error(e.kind(), e.what(), e.line_no());
  } catch (const hyqe::Error& e) {
    print_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
  }
  return 1;
}
