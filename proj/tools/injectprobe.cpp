#include <CLI11.hpp>

#include <cstdint>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "injectprobe/attack.hpp"
#include "injectprobe/backend.hpp"
#include "injectprobe/dataset.hpp"
#include "injectprobe/digest.hpp"
#include "injectprobe/errors.hpp"
#include "injectprobe/pipeline.hpp"
#include "injectprobe/report.hpp"
#include "injectprobe/scoring.hpp"

namespace {

namespace ip = injectprobe;

// Exit codes: 0 ok, 2 config, 3 backend, 4 storage, 64 usage.
int exit_code_for(const ip::Error& e) {
  if (dynamic_cast<const ip::AuthError*>(&e) != nullptr ||
      dynamic_cast<const ip::NetworkError*>(&e) != nullptr ||
      dynamic_cast<const ip::RateLimited*>(&e) != nullptr ||
      dynamic_cast<const ip::CacheMiss*>(&e) != nullptr) {
    return 3;
  }
  if (dynamic_cast<const ip::StorageError*>(&e) != nullptr) {
    return 4;
  }
  return 2;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw ip::ParseError("cannot read file: " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.is_open()) {
    throw ip::StorageError("cannot open for writing: " + path);
  }
  out << content;
  if (!out.good()) {
    throw ip::StorageError("write failed: " + path);
  }
}

void write_or_print(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
  } else {
    write_file(out_path, content);
  }
}

struct CommonOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  double threshold = -1.0;  // < 0 means "not given"
  std::string format = "json";
  bool quiet = false;
  bool verbose = false;
};

void add_common_options(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Attack configuration JSON file");
  cmd->add_option("--out", opts.out, "Output file or directory");
  cmd->add_option("--seed", opts.seed, "Deterministic RNG seed");
  cmd->add_option("--threshold", opts.threshold,
                  "Similarity threshold in (0, 100)");
  cmd->add_option("--format", opts.format, "Output format: json, csv, markdown");
}

double threshold_or(const CommonOptions& opts, double fallback) {
  if (opts.threshold < 0.0) return fallback;
  if (opts.threshold <= 0.0 || opts.threshold >= 100.0) {
    throw ip::SchemaError("threshold", "threshold must be in (0, 100)");
  }
  return opts.threshold;
}

ip::AttackConfig config_from(const CommonOptions& opts) {
  if (opts.config.empty()) {
    throw ip::ParseError("--config is required for this command");
  }
  return ip::load_config(read_file(opts.config));
}

/// Backend spec grammar: mock[:vulnerable|:hardened] | replay:<cache.jsonl> |
/// http:<adapter.json>
ip::BackendDescriptor parse_backend_spec(const std::string& spec) {
  ip::BackendDescriptor d;
  const std::size_t colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::string rest =
      colon == std::string::npos ? std::string() : spec.substr(colon + 1);

  if (head == "mock") {
    d.kind = ip::BackendKind::scripted_mock;
    ip::MockProfile profile;
    profile.vulnerability = rest.empty() ? ip::Vulnerability::vulnerable
                                         : ip::parse_vulnerability(rest);
    d.mock_profile = profile;
    d.name = "mock-" + std::string(ip::to_string(profile.vulnerability));
    return d;
  }
  if (head == "replay") {
    if (rest.empty()) {
      throw ip::SchemaError("backend", "replay backend needs a cache path: "
                                       "replay:<completions.jsonl>");
    }
    d.kind = ip::BackendKind::replay;
    d.cache_path = rest;
    d.name = "replay";
    return d;
  }
  if (head == "http") {
    if (rest.empty()) {
      throw ip::SchemaError("backend", "http backend needs an adapter config: "
                                       "http:<adapter.json>");
    }
    d.kind = ip::BackendKind::http_api;
    d.http = ip::load_http_adapter_config(read_file(rest));
    d.name = d.http->model_identifier.empty() ? "http-api"
                                              : d.http->model_identifier;
    return d;
  }
  throw ip::SchemaError("backend", "unknown backend spec '" + spec +
                                       "' (expected mock[:...], replay:<path> "
                                       "or http:<adapter.json>)");
}

void cmd_catalog_export(const CommonOptions& opts) {
  const ip::AttackConfig config = ip::builtin_config();
  write_or_print(opts.out, ip::config_to_json(config));
  if (!opts.quiet) {
    std::cerr << config.templates.size() << " templates, "
              << config.attacks.size() << " attacks exported\n";
  }
}

void cmd_matrix_build(const CommonOptions& opts) {
  const ip::AttackConfig config = config_from(opts);
  const auto matrix = ip::build_attack_matrix(config);
  write_or_print(opts.out,
                 ip::matrix_to_json(matrix, ip::config_digest(config)));
  std::ostream& os = opts.out.empty() ? std::cerr : std::cout;
  os << matrix.size() << " cases\n";
}

void cmd_attack_run(const CommonOptions& opts, const std::string& backend_spec,
                    int concurrency) {
  const ip::AttackConfig config = config_from(opts);
  const ip::BackendDescriptor backend = parse_backend_spec(backend_spec);

  ip::RunOptions run_options;
  run_options.concurrency = concurrency;
  run_options.out_dir = opts.out.empty() ? "out" : opts.out;
  run_options.quiet = opts.quiet;
  if (opts.threshold >= 0.0) {
    run_options.threshold = threshold_or(opts, config.threshold);
  }

  const ip::RunManifest manifest =
      ip::run_pipeline(config, backend, run_options);
  if (!opts.quiet) {
    const ip::RunReport report =
        ip::parse_report(read_file(manifest.artifacts.report));
    std::cout << ip::emit_report(report, ip::ReportFormat::markdown);
    std::cout << "artifacts in " << run_options.out_dir << "\n";
  }
}

void cmd_score_replay(const CommonOptions& opts, const std::string& cache_path) {
  const auto entries = ip::load_run_log(cache_path);
  const double threshold = threshold_or(opts, 80.0);
  if (!opts.config.empty()) {
    // Bind the rescore to its configuration: a mismatched digest fails loudly.
    const ip::AttackConfig config = ip::load_config(read_file(opts.config));
    const std::string expected = ip::config_digest(config);
    for (const auto& entry : entries) {
      if (entry.config_digest != expected) {
        throw ip::SchemaError("config",
                              "run log was produced by a different config "
                              "(digest mismatch)");
      }
    }
  }
  const std::string created_at = ip::current_timestamp();
  const std::string run_id = ip::digest_hex128(
      "rescore-v1\x1f" + cache_path + "\x1f" + ip::format_double(threshold) +
      "\x1f" + created_at);
  const ip::RunReport report =
      ip::rescore_run_log(entries, threshold, run_id, created_at);
  write_or_print(opts.out,
                 ip::emit_report(report, ip::parse_report_format(opts.format)));
  if (!opts.quiet) {
    std::cerr << entries.size() << " records rescored at threshold "
              << threshold << "\n";
  }
}

void cmd_report_emit(const CommonOptions& opts, const std::string& in_path,
                     const std::string& series_path) {
  if (in_path.empty() == series_path.empty()) {
    throw CLI::RequiredError("exactly one of --in or --series");
  }
  if (!series_path.empty()) {
    const auto doc = nlohmann::json::parse(read_file(series_path), nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) {
      throw ip::ParseError("series input must be a JSON array of "
                           "{model, parameters, avg_success_rate}");
    }
    std::vector<ip::SizeEntry> entries;
    for (const auto& item : doc) {
      ip::SizeEntry e;
      e.model = item.at("model").get<std::string>();
      e.parameter_count = item.at("parameters").get<double>();
      e.avg_success_rate = item.at("avg_success_rate").get<double>();
      entries.push_back(std::move(e));
    }
    write_or_print(opts.out,
                   ip::series_to_csv(ip::size_vulnerability_series(entries)));
    return;
  }
  const ip::RunReport report = ip::parse_report(read_file(in_path));
  write_or_print(opts.out,
                 ip::emit_report(report, ip::parse_report_format(opts.format)));
}

void cmd_report_compare(const CommonOptions& opts, const std::string& before_path,
                        const std::string& after_path) {
  const ip::RunReport before = ip::parse_report(read_file(before_path));
  const ip::RunReport after = ip::parse_report(read_file(after_path));
  const ip::ComparisonTable table = ip::compare_reports(before, after);
  write_or_print(
      opts.out, ip::emit_comparison(table, ip::parse_report_format(opts.format)));
}

void cmd_dataset_finetune(const CommonOptions& opts,
                          const std::vector<std::string>& corpus_specs,
                          double rate, const std::string& prefix,
                          const std::string& suffix) {
  std::vector<ip::TaskPair> pairs;
  for (const std::string& spec : corpus_specs) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos) {
      throw ip::SchemaError("corpus",
                            "expected <task_kind>=<path.csv>, got '" + spec + "'");
    }
    const ip::TaskKind kind = ip::parse_task_kind(spec.substr(0, eq));
    auto loaded = ip::load_task_pairs_csv(spec.substr(eq + 1), kind);
    pairs.insert(pairs.end(), loaded.begin(), loaded.end());
  }

  ip::AttackConfig config =
      opts.config.empty() ? ip::builtin_config() : config_from(opts);
  const ip::TemplateCatalog templates(config.templates);
  const ip::AttackCatalog attacks(config.attacks);

  const auto examples =
      ip::build_finetune_dataset(pairs, templates, attacks, rate, opts.seed);
  if (opts.out.empty()) {
    throw ip::ParseError("--out is required for dataset emission");
  }
  const std::size_t written = ip::emit_jsonl(examples, opts.out, prefix, suffix);
  if (!opts.quiet) {
    std::size_t adversarial = 0;
    for (const auto& e : examples) adversarial += e.adversarial ? 1 : 0;
    std::cout << written << " examples written (" << adversarial
              << " adversarial)\n";
  }
}

void cmd_dataset_rl(const CommonOptions& opts, const std::string& runlog_path) {
  const auto entries = ip::load_run_log(runlog_path);
  const auto records = ip::run_records_from_log(entries);
  const auto examples = ip::build_rl_dataset(records);
  if (opts.out.empty()) {
    throw ip::ParseError("--out is required for dataset emission");
  }
  const std::size_t written = ip::emit_rl_jsonl(examples, opts.out);
  if (!opts.quiet) {
    std::size_t penalized = 0;
    for (const auto& e : examples) penalized += e.reward < 0 ? 1 : 0;
    std::cout << written << " examples written (" << penalized
              << " penalized)\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-injection penetration testing and defense-dataset "
               "toolkit"};
  app.require_subcommand(1);
  bool quiet = false;
  bool verbose = false;
  app.add_flag("--quiet", quiet, "Suppress informational output");
  app.add_flag("--verbose", verbose, "Verbose diagnostics");

  // catalog export
  auto* catalog = app.add_subcommand("catalog", "Builtin catalog operations");
  catalog->require_subcommand(1);
  auto catalog_export_opts = std::make_shared<CommonOptions>();
  auto* catalog_export =
      catalog->add_subcommand("export", "Export the builtin catalog as a "
                                        "runnable attack config");
  add_common_options(catalog_export, *catalog_export_opts);
  catalog_export->callback([catalog_export_opts, &quiet] {
    catalog_export_opts->quiet = quiet;
    cmd_catalog_export(*catalog_export_opts);
  });

  // matrix build
  auto* matrix = app.add_subcommand("matrix", "Attack matrix operations");
  matrix->require_subcommand(1);
  auto matrix_build_opts = std::make_shared<CommonOptions>();
  auto* matrix_build = matrix->add_subcommand(
      "build", "Expand the cartesian attack matrix from a config");
  add_common_options(matrix_build, *matrix_build_opts);
  matrix_build->callback([matrix_build_opts, &quiet] {
    matrix_build_opts->quiet = quiet;
    cmd_matrix_build(*matrix_build_opts);
  });

  // attack run
  auto* attack = app.add_subcommand("attack", "Attack execution");
  attack->require_subcommand(1);
  auto attack_run_opts = std::make_shared<CommonOptions>();
  auto attack_backend = std::make_shared<std::string>("mock:vulnerable");
  auto attack_concurrency = std::make_shared<int>(4);
  auto* attack_run = attack->add_subcommand(
      "run", "Execute the full matrix against a backend");
  add_common_options(attack_run, *attack_run_opts);
  attack_run->add_option("--backend", *attack_backend,
                         "mock[:vulnerable|:hardened], replay:<cache.jsonl> or "
                         "http:<adapter.json>");
  attack_run->add_option("--concurrency", *attack_concurrency,
                         "Bounded worker count");
  attack_run->callback([attack_run_opts, attack_backend, attack_concurrency,
                        &quiet] {
    attack_run_opts->quiet = quiet;
    cmd_attack_run(*attack_run_opts, *attack_backend, *attack_concurrency);
  });

  // score replay
  auto* score = app.add_subcommand("score", "Scoring over recorded runs");
  score->require_subcommand(1);
  auto score_replay_opts = std::make_shared<CommonOptions>();
  auto score_cache = std::make_shared<std::string>();
  auto* score_replay = score->add_subcommand(
      "replay", "Re-score a run log at a new threshold without re-execution");
  add_common_options(score_replay, *score_replay_opts);
  score_replay->add_option("--cache", *score_cache, "Run log to re-score")
      ->required();
  score_replay->callback([score_replay_opts, score_cache, &quiet] {
    score_replay_opts->quiet = quiet;
    cmd_score_replay(*score_replay_opts, *score_cache);
  });

  // report emit / compare
  auto* report = app.add_subcommand("report", "Report rendering");
  report->require_subcommand(1);
  auto report_emit_opts = std::make_shared<CommonOptions>();
  auto report_in = std::make_shared<std::string>();
  auto report_series = std::make_shared<std::string>();
  auto* report_emit =
      report->add_subcommand("emit", "Render a report (or a size/vulnerability "
                                     "series) in json, csv or markdown");
  add_common_options(report_emit, *report_emit_opts);
  report_emit->add_option("--in", *report_in, "Report JSON to render");
  report_emit->add_option("--series", *report_series,
                          "JSON array of {model, parameters, avg_success_rate} "
                          "to emit as plot-ready CSV");
  report_emit->callback([report_emit_opts, report_in, report_series] {
    cmd_report_emit(*report_emit_opts, *report_in, *report_series);
  });

  auto report_compare_opts = std::make_shared<CommonOptions>();
  auto report_before = std::make_shared<std::string>();
  auto report_after = std::make_shared<std::string>();
  auto* report_compare = report->add_subcommand(
      "compare", "Cellwise before/after comparison of two reports");
  add_common_options(report_compare, *report_compare_opts);
  report_compare_opts->format = "markdown";
  report_compare->add_option("--before", *report_before, "Baseline report JSON")
      ->required();
  report_compare->add_option("--after", *report_after, "Follow-up report JSON")
      ->required();
  report_compare->callback([report_compare_opts, report_before, report_after] {
    cmd_report_compare(*report_compare_opts, *report_before, *report_after);
  });

  // dataset finetune / rl
  auto* dataset = app.add_subcommand("dataset", "Defense-dataset emission");
  dataset->require_subcommand(1);
  auto dataset_ft_opts = std::make_shared<CommonOptions>();
  auto dataset_corpora = std::make_shared<std::vector<std::string>>();
  auto dataset_rate = std::make_shared<double>(0.5);
  auto dataset_prefix = std::make_shared<std::string>(" ");
  auto dataset_suffix = std::make_shared<std::string>("\n###");
  auto* dataset_finetune = dataset->add_subcommand(
      "finetune",
      "Build the tagged prompt / safe-completion fine-tuning dataset");
  add_common_options(dataset_finetune, *dataset_ft_opts);
  dataset_finetune
      ->add_option("--corpus", *dataset_corpora,
                   "Task corpus as <task_kind>=<path.csv>; repeatable")
      ->required();
  dataset_finetune->add_option("--rate", *dataset_rate,
                               "Injection rate in [0, 1]");
  dataset_finetune->add_option("--prefix", *dataset_prefix,
                               "Completion prefix (vendor convention)");
  dataset_finetune->add_option("--suffix", *dataset_suffix,
                               "Completion suffix / stop marker");
  dataset_finetune->callback([dataset_ft_opts, dataset_corpora, dataset_rate,
                              dataset_prefix, dataset_suffix, &quiet] {
    dataset_ft_opts->quiet = quiet;
    cmd_dataset_finetune(*dataset_ft_opts, *dataset_corpora, *dataset_rate,
                         *dataset_prefix, *dataset_suffix);
  });

  auto dataset_rl_opts = std::make_shared<CommonOptions>();
  auto dataset_runlog = std::make_shared<std::string>();
  auto* dataset_rl = dataset->add_subcommand(
      "rl", "Build the reward-labeled dataset from a run log");
  add_common_options(dataset_rl, *dataset_rl_opts);
  dataset_rl->add_option("--runlog", *dataset_runlog, "Run log JSONL")
      ->required();
  dataset_rl->callback([dataset_rl_opts, dataset_runlog, &quiet] {
    dataset_rl_opts->quiet = quiet;
    cmd_dataset_rl(*dataset_rl_opts, *dataset_runlog);
  });

  // Global flags (--quiet/--verbose) are accepted anywhere on the line.
  std::function<void(CLI::App*)> enable_fallthrough = [&](CLI::App* cmd) {
    cmd->fallthrough();
    for (CLI::App* sub :
         cmd->get_subcommands([](const CLI::App*) { return true; })) {
      enable_fallthrough(sub);
    }
  };
  enable_fallthrough(&app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
    return 64;
  } catch (const ip::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
