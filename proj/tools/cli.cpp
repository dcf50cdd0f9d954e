#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "promptlens/config.hpp"
#include "promptlens/csv.hpp"
#include "promptlens/error.hpp"
#include "promptlens/experiment.hpp"
#include "promptlens/format.hpp"
#include "promptlens/importance.hpp"
#include "promptlens/report.hpp"

namespace promptlens::cli {
namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::optional<std::string> config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<double> temperature;
  std::optional<std::string> scores;
  std::optional<std::string> provider;
  std::optional<std::string> base_url;
  std::optional<std::string> model;
  std::optional<std::string> cache_dir;
  std::optional<std::string> out;
  std::optional<std::size_t> budget;
  bool exclude_stopwords = false;
  bool allow_over_budget = false;
  bool dry_run = false;
  bool verbose = false;
};

void add_common(CLI::App& cmd, CommonFlags& f, bool run_flags) {
  cmd.add_option("--config,-c", f.config, "Config file (sectioned key = value)");
  cmd.add_option("--set", f.set, "Override a config value: section.key=value (repeatable)");
  cmd.add_option("--provider", f.provider, "Provider kind: stub or http");
  cmd.add_option("--cache-dir", f.cache_dir, "Response cache directory");
  cmd.add_flag("--verbose,-v", f.verbose, "Debug logging on stderr");
  if (!run_flags) return;
  cmd.add_option("--seed", f.seed, "Stub seed");
  cmd.add_option("--n", f.n, "Completions per (prompt, user input)");
  cmd.add_option("--temperature", f.temperature, "Sampling temperature");
  cmd.add_option("--scores", f.scores, "Comma-separated score ids");
  cmd.add_option("--base-url", f.base_url, "OpenAI-compatible endpoint base URL");
  cmd.add_option("--model", f.model, "Model id");
  cmd.add_option("--out,-o", f.out, "Output directory");
  cmd.add_option("--budget", f.budget, "Refuse runs needing more uncached provider calls");
  cmd.add_flag("--exclude-stopwords", f.exclude_stopwords, "Do not mask stopwords");
  cmd.add_flag("--allow-over-budget", f.allow_over_budget, "Run even when over --budget");
  cmd.add_flag("--dry-run", f.dry_run, "Print the call plan; contact no provider");
}

RunConfig resolve_config(const CommonFlags& f) {
  ConfigOverrides overrides;
  for (const auto& item : f.set) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--set " + item + ": expected section.key=value");
    overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  if (f.provider) overrides.emplace_back("provider.kind", *f.provider);
  if (f.base_url) overrides.emplace_back("provider.base_url", *f.base_url);
  if (f.model) overrides.emplace_back("provider.model", *f.model);
  if (f.cache_dir) overrides.emplace_back("provider.cache_dir", *f.cache_dir);
  if (f.seed) overrides.emplace_back("stub.seed", std::to_string(*f.seed));
  if (f.n) overrides.emplace_back("sampling.n", std::to_string(*f.n));
  if (f.temperature) overrides.emplace_back("sampling.temperature", format_double(*f.temperature));
  if (f.scores) overrides.emplace_back("scoring.scores", *f.scores);
  if (f.out) overrides.emplace_back("output.dir", *f.out);
  if (f.budget) overrides.emplace_back("engine.budget", std::to_string(*f.budget));
  if (f.exclude_stopwords) overrides.emplace_back("masking.exclude_stopwords", "true");
  std::optional<fs::path> path;
  if (f.config) path = *f.config;
  return load_config(path, overrides);
}

Runtime runtime_for(const RunConfig& config, bool dry_run) {
  if (!dry_run) return make_runtime(config);
  // A dry run never sends a request, so a missing key is not an error yet.
  return make_runtime(config, [](const std::string& name) {
    return process_env(name).value_or("dry-run");
  });
}

ReportProvenance provenance_of(const RunConfig& config, std::size_t m) {
  ReportProvenance p;
  p.model_id = config.provider.model;
  p.temperature = config.temperature;
  p.n = config.n;
  p.m = m;
  p.config_digest = config_digest(config);
  p.tool_version = kToolVersion;
  if (config.provider.kind == "stub") p.seed = config.seed;
  p.timestamp = utc_timestamp();
  return p;
}

std::string file_safe(std::string_view s) {
  std::string out;
  for (const char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "_" : out;
}

void print_plan(std::ostream& out, const CallPlan& plan, const RunConfig& config) {
  const std::size_t requests =
      config.provider.kind == "http" && config.provider.batch_n
          ? (plan.to_fetch() + static_cast<std::size_t>(config.n) - 1) / static_cast<std::size_t>(config.n)
          : plan.to_fetch();
  out << "call plan: " << plan.variants << " masked variants, " << plan.total_samples
      << " samples (" << plan.cached_samples << " cached, " << plan.to_fetch()
      << " to fetch)\n"
      << "estimated provider requests: at most " << requests << "\n";
}

struct AnalyzeFlags {
  std::optional<std::string> prompt;
  std::vector<std::string> users;
  std::optional<std::string> user_file;
  std::optional<std::string> corpus;
  std::optional<std::string> prompt_id;
  std::optional<std::string> suffix;
  bool heatmap = false;
  std::size_t width = 100;
  int precision = 3;
};

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_text_file(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() != '#') out.push_back(line);
  }
  return out;
}

int cmd_analyze(const CommonFlags& f, const AnalyzeFlags& a, std::ostream& out, std::ostream& err,
                const std::atomic<bool>* cancel) {
  const RunConfig config = resolve_config(f);
  PromptSpec spec;
  if (a.corpus) {
    if (a.prompt) throw CLI::ValidationError("--prompt and --corpus are mutually exclusive");
    const Corpus corpus = load_corpus(*a.corpus);
    for (const auto& issue : corpus.issues) {
      err << "corpus line " << issue.line << ": " << issue.message << " (row skipped)\n";
    }
    if (corpus.prompts.empty()) throw InvalidArgument("corpus has no usable rows");
    const std::string id = a.prompt_id.value_or(corpus.prompts.front().prompt_id);
    const auto it = std::find_if(corpus.prompts.begin(), corpus.prompts.end(),
                                 [&](const auto& p) { return p.prompt_id == id; });
    if (it == corpus.prompts.end()) throw InvalidArgument("corpus has no prompt '" + id + "'");
    spec = *it;
  } else {
    if (!a.prompt) throw CLI::ValidationError("a system prompt is required (--prompt or --corpus)");
    spec.prompt_id = a.prompt_id.value_or("prompt");
    spec.system_prompt = *a.prompt;
  }
  for (const auto& u : a.users) spec.user_inputs.push_back(u);
  if (a.user_file) {
    for (auto& u : read_lines(*a.user_file)) spec.user_inputs.push_back(std::move(u));
  }
  if (spec.user_inputs.empty()) throw CLI::ValidationError("at least one --user input is required");
  if (a.suffix) spec.suffix = *a.suffix;
  spec.validate();

  Runtime rt = runtime_for(config, f.dry_run);
  EngineOptions options = engine_options(config);
  options.allow_over_budget = f.allow_over_budget;
  options.cancel = cancel;

  const CallPlan plan = plan_calls(spec, *rt.provider, options);
  if (f.dry_run) {
    print_plan(out, plan, config);
    for (const auto& unit : plan_units(spec, options.masking)) out << "  " << unit.masked_prompt << "\n";
    return kOk;
  }
  if (config.budget && plan.to_fetch() > *config.budget && !f.allow_over_budget) {
    err << "refusing to run: " << plan.to_fetch() << " uncached provider calls exceed budget "
        << *config.budget << " (pass --allow-over-budget to run anyway)\n";
    return kBudget;
  }

  const ImportanceMatrix matrix = word_importance(spec, *rt.provider, rt.scorers, options);
  TerminalOptions view;
  view.width = a.width;
  view.precision = a.precision;
  const std::string table = render_terminal(matrix, view);
  out << table;
  out << "provider calls: " << matrix.provider_calls << "\n";

  const fs::path dir = config.output_dir;
  const std::string stem = file_safe(matrix.prompt_id);
  export_document(matrix_document(matrix, config.provider.kind == "stub" ? config.seed : std::nullopt),
                  dir / (stem + ".matrix.json"));
  write_file_atomic(dir / (stem + ".txt"), table);
  if (a.heatmap && matrix.rows() > 0) {
    write_file_atomic(dir / (stem + ".heatmap.svg"), matrix_heatmap_svg(matrix));
  }
  out << "wrote " << (dir / (stem + ".matrix.json")).string() << "\n";
  if (matrix.partial) {
    err << "partial result: " << (cancel && cancel->load() ? "interrupted" : "some variants failed")
        << "; missing cells are marked\n";
    return kPartial;
  }
  return kOk;
}

struct ExperimentFlags {
  std::optional<std::string> corpus;
  std::optional<std::string> questions;
  std::optional<std::string> suffixes;
  bool all_words = false;
};

void print_summaries(std::ostream& out, const std::vector<CorrelationSummary>& summaries) {
  std::size_t w_suffix = 6;
  std::size_t w_score = 5;
  for (const auto& s : summaries) {
    w_suffix = std::max(w_suffix, s.suffix_id.size());
    w_score = std::max(w_score, s.score_id.size());
  }
  out << std::left << std::setw(static_cast<int>(w_suffix)) << "suffix" << "  "
      << std::setw(static_cast<int>(w_score)) << "score" << "  designed  points       r\n";
  for (const auto& s : summaries) {
    out << std::left << std::setw(static_cast<int>(w_suffix)) << s.suffix_id << "  "
        << std::setw(static_cast<int>(w_score)) << s.score_id << "  "
        << std::setw(8) << (s.designed ? "yes" : "") << "  " << std::right << std::setw(6)
        << s.n_points << "  " << std::setw(6) << (s.r ? format_fixed(*s.r, 3) : "n/a") << std::left;
    if (!s.computable) out << "  (" << s.reason << ")";
    out << "\n";
  }
}

int cmd_experiment(const CommonFlags& f, const ExperimentFlags& x, std::ostream& out,
                   std::ostream& err, const std::atomic<bool>* cancel) {
  const RunConfig config = resolve_config(f);
  if (static_cast<bool>(x.corpus) == static_cast<bool>(x.questions)) {
    throw CLI::ValidationError("exactly one of --corpus or --questions is required");
  }
  if (!x.suffixes) throw CLI::ValidationError("--suffixes is required");
  const Corpus corpus = x.corpus ? load_corpus(*x.corpus) : load_question_list(*x.questions);
  for (const auto& issue : corpus.issues) {
    err << "corpus line " << issue.line << ": " << issue.message << " (row excluded)\n";
  }
  if (corpus.prompts.empty()) throw CLI::ValidationError("corpus is empty");
  const auto suffixes = load_suffixes(*x.suffixes);
  if (suffixes.empty()) throw CLI::ValidationError("suffix file is empty");

  Runtime rt = runtime_for(config, f.dry_run);
  ExperimentOptions options;
  options.engine = engine_options(config);
  options.engine.allow_over_budget = f.allow_over_budget;
  options.engine.cancel = cancel;
  options.mask_all_words = x.all_words;

  const CallPlan plan = plan_experiment(corpus.prompts, suffixes, *rt.provider, options);
  if (f.dry_run) {
    out << corpus.prompts.size() << " prompts x " << suffixes.size() << " suffixes x "
        << rt.scorers.size() << " scores\n";
    print_plan(out, plan, config);
    return kOk;
  }
  if (config.budget && plan.to_fetch() > *config.budget && !f.allow_over_budget) {
    err << "refusing to run: " << plan.to_fetch() << " uncached provider calls exceed budget "
        << *config.budget << " (pass --allow-over-budget to run anyway)\n";
    return kBudget;
  }

  const ExperimentResult result =
      run_suffix_experiment(corpus.prompts, suffixes, *rt.provider, rt.scorers, options);

  std::size_t m = 0;
  for (const auto& p : corpus.prompts) m = std::max(m, p.user_inputs.size());
  const ReportProvenance provenance = provenance_of(config, m);
  const fs::path dir = config.output_dir;
  write_file_atomic(dir / "records.csv", records_csv(result.records));
  export_document(records_document(result.records, provenance), dir / "records.json");
  export_document(summary_document(result, provenance), dir / "summary.json");
  write_file_atomic(dir / "summary.csv", summaries_csv(result.summaries));

  std::string exclusions = csv_line({"prompt_id", "suffix_id", "line", "reason"});
  for (const auto& issue : corpus.issues) {
    exclusions += csv_line({"", "", std::to_string(issue.line), issue.message});
  }
  for (const auto& e : result.exclusions) exclusions += csv_line({e.prompt_id, e.suffix_id, "", e.reason});
  write_file_atomic(dir / "exclusions.csv", exclusions);

  std::size_t plots = 0;
  for (const auto& s : result.summaries) {
    std::vector<SuffixExperimentRecord> points;
    for (const auto& r : result.records) {
      if (r.suffix_id == s.suffix_id && r.score_id == s.score_id) points.push_back(r);
    }
    if (points.size() < 2) continue;
    plot_scatter(points, s, dir / ("scatter_" + file_safe(s.suffix_id) + "_" + file_safe(s.score_id) + ".svg"));
    ++plots;
  }

  print_summaries(out, result.summaries);
  out << result.records.size() << " records, " << result.summaries.size() << " summaries, "
      << plots << " plots, " << result.exclusions.size() + corpus.issues.size() << " exclusions\n"
      << "provider calls: " << result.provider_calls << "\n"
      << "wrote " << dir.string() << "\n";
  if (result.partial) {
    err << "partial result: interrupted\n";
    return kPartial;
  }
  return kOk;
}

int cmd_cache(const CommonFlags& f, const std::string& action, std::ostream& out,
              std::ostream& err) {
  CommonFlags relaxed = f;
  RunConfig config;
  // Cache maintenance needs only the directory; do not insist on a seed or endpoint.
  try {
    config = resolve_config(relaxed);
  } catch (const ConfigError&) {
    relaxed.set.push_back("stub.seed=0");
    relaxed.set.push_back("provider.kind=stub");
    config = resolve_config(relaxed);
  }
  ResponseCache cache(config.provider.cache_dir);
  try {
    if (action == "clear") {
      cache.clear();
      out << "cleared " << config.provider.cache_dir.string() << "\n";
      return kOk;
    }
    const CacheStats stats = cache.stats();
    out << "cache: " << config.provider.cache_dir.string() << "\n"
        << "entries: " << stats.entries() << "\n"
        << "completion entries: " << stats.completion_entries << "\n"
        << "embedding entries: " << stats.embedding_entries << "\n"
        << "bytes: " << stats.bytes << "\n";
    return kOk;
  } catch (const std::runtime_error& e) {
    err << "cache error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* cancel) {
  CLI::App app{"Word importance analysis for system prompts", "promptlens"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonFlags analyze_flags;
  AnalyzeFlags analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Word importance of one system prompt");
  add_common(*analyze_cmd, analyze_flags, true);
  analyze_cmd->add_option("--prompt,-p", analyze.prompt, "System prompt text");
  analyze_cmd->add_option("--user,-u", analyze.users, "User input (repeatable)");
  analyze_cmd->add_option("--user-file", analyze.user_file, "File with one user input per line");
  analyze_cmd->add_option("--corpus", analyze.corpus, "Take the prompt from a corpus file");
  analyze_cmd->add_option("--prompt-id", analyze.prompt_id, "Prompt id (label, or corpus row group)");
  analyze_cmd->add_option("--suffix", analyze.suffix, "Suffix appended after one space");
  analyze_cmd->add_flag("--heatmap", analyze.heatmap, "Also write a word x score heatmap SVG");
  analyze_cmd->add_option("--width", analyze.width, "Terminal table width")->check(CLI::Range(40, 1000));
  analyze_cmd->add_option("--precision", analyze.precision, "Decimals in the table")->check(CLI::Range(0, 12));

  CommonFlags experiment_flags;
  ExperimentFlags experiment;
  auto* experiment_cmd = app.add_subcommand("experiment", "Suffix impact vs. word importance over a corpus");
  add_common(*experiment_cmd, experiment_flags, true);
  experiment_cmd->add_option("--corpus", experiment.corpus,
                             "CSV: system_prompt,prompt_topic,user_input,input_topic");
  experiment_cmd->add_option("--questions", experiment.questions,
                             "One question per line, system prompt \"Answer truthfully.\"");
  experiment_cmd->add_option("--suffixes", experiment.suffixes, "CSV: suffix_id,text,score_id");
  experiment_cmd->add_flag("--all-words", experiment.all_words,
                           "Mask every word of prompt + suffix, not only the suffix");

  CommonFlags cache_flags;
  std::string cache_action;
  auto* cache_cmd = app.add_subcommand("cache", "Inspect or clear the response cache");
  add_common(*cache_cmd, cache_flags, false);
  cache_cmd->add_option("action", cache_action, "stats or clear")
      ->required()
      ->check(CLI::IsMember({"stats", "clear"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*analyze_cmd) {
      spdlog::set_level(analyze_flags.verbose ? spdlog::level::debug : spdlog::level::warn);
      return cmd_analyze(analyze_flags, analyze, out, err, cancel);
    }
    if (*experiment_cmd) {
      spdlog::set_level(experiment_flags.verbose ? spdlog::level::debug : spdlog::level::warn);
      return cmd_experiment(experiment_flags, experiment, out, err, cancel);
    }
    return cmd_cache(cache_flags, cache_action, out, err);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const BudgetExceeded& e) {
    err << "refusing to run: " << e.what() << " (pass --allow-over-budget to run anyway)\n";
    return kBudget;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ProviderError& e) {
    err << "provider error: " << e.what() << "\n";
    return kProvider;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kUsage;
  } catch (const UnsupportedVersion& e) {
    err << "input error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << "\n";
    return kUnexpected;
  }
}

}  // namespace promptlens::cli
