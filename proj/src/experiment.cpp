#include "promptlens/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "promptlens/csv.hpp"

namespace promptlens {
namespace {

Eigen::Map<const VectorXd> as_vector(const std::vector<double>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

PromptSpec bare_prompt(const PromptSpec& spec) {
  PromptSpec bare = spec;
  bare.system_prompt = spec.full_system_prompt();
  bare.suffix.reset();
  return bare;
}

PromptSpec with_suffix(const PromptSpec& prompt, const SuffixSpec& suffix) {
  PromptSpec out = bare_prompt(prompt);
  out.suffix = suffix.text;
  return out;
}

bool cancelled(const EngineOptions& options) {
  return options.cancel != nullptr && options.cancel->load();
}

void check_inputs(const std::vector<PromptSpec>& corpus, const std::vector<SuffixSpec>& suffixes) {
  if (corpus.empty()) throw InvalidArgument("experiment: empty corpus");
  if (suffixes.empty()) throw InvalidArgument("experiment: no suffixes");
  std::set<std::string> ids;
  for (const auto& s : suffixes) {
    if (s.suffix_id.empty()) throw InvalidArgument("experiment: suffix with empty id");
    if (s.text.empty()) throw InvalidArgument("experiment: suffix '" + s.suffix_id + "' is empty");
    if (!ids.insert(s.suffix_id).second) {
      throw InvalidArgument("experiment: duplicate suffix id '" + s.suffix_id + "'");
    }
  }
  std::set<std::string> prompt_ids;
  for (const auto& p : corpus) {
    if (!prompt_ids.insert(p.prompt_id).second) {
      throw InvalidArgument("experiment: duplicate prompt id '" + p.prompt_id + "'");
    }
  }
}

EngineOptions suffix_engine_options(const PromptSpec& spec, const ExperimentOptions& options) {
  EngineOptions engine = options.engine;
  engine.budget.reset();
  if (!options.mask_all_words) engine.masking.only_tokens = suffix_words(spec);
  return engine;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

bool is_header(const CsvRow& row, const std::vector<std::string_view>& names) {
  if (row.fields.size() != names.size()) return false;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (to_lower(trim(row.fields[k])) != names[k]) return false;
  }
  return true;
}

}  // namespace

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson(as_vector(xs), as_vector(ys));
}

LinearFit least_squares(const std::vector<double>& xs, const std::vector<double>& ys) {
  return least_squares(as_vector(xs), as_vector(ys));
}

std::vector<std::optional<double>> suffix_impact(const PromptSpec& spec,
                                                 CompletionProvider& provider,
                                                 const ScorerSet& scorers,
                                                 const EngineOptions& options) {
  if (!spec.suffix || spec.suffix->empty()) {
    throw InvalidArgument("suffix_impact: prompt '" + spec.prompt_id + "' has no suffix");
  }
  const ScoredSamples with = compute_baseline(spec, provider, scorers, options);
  PromptSpec bare = spec;
  bare.suffix.reset();
  const ScoredSamples without = compute_baseline(bare, provider, scorers, options);
  std::vector<std::optional<double>> out;
  for (std::size_t c = 0; c < scorers.size(); ++c) {
    out.push_back(aggregate_deviation(with, without, c, options.aggregation));
  }
  return out;
}

CallPlan plan_experiment(const std::vector<PromptSpec>& corpus,
                         const std::vector<SuffixSpec>& suffixes,
                         const CompletionProvider& provider, const ExperimentOptions& options) {
  check_inputs(corpus, suffixes);
  CallPlan total;
  for (const auto& prompt : corpus) {
    const PromptSpec bare = bare_prompt(prompt);
    bare.validate();
    for (const auto& user : bare.user_inputs) {
      const CompletionRequest request{bare.system_prompt, user, options.engine.n,
                                      options.engine.temperature, options.engine.model_id};
      for (int i = 0; i < options.engine.n; ++i) {
        ++total.total_samples;
        if (provider.is_cached(request, i)) ++total.cached_samples;
      }
    }
    for (const auto& suffix : suffixes) {
      const PromptSpec spec = with_suffix(prompt, suffix);
      const CallPlan plan = plan_calls(spec, provider, suffix_engine_options(spec, options));
      total.variants += plan.variants;
      total.total_samples += plan.total_samples;
      total.cached_samples += plan.cached_samples;
    }
  }
  return total;
}

std::vector<CorrelationSummary> summarize(const std::vector<SuffixExperimentRecord>& records,
                                          const std::vector<SuffixSpec>& suffixes,
                                          const std::vector<std::string>& score_ids) {
  std::map<std::pair<std::string, std::string>, std::vector<const SuffixExperimentRecord*>> groups;
  for (const auto& r : records) groups[{r.suffix_id, r.score_id}].push_back(&r);

  std::vector<CorrelationSummary> out;
  for (const auto& suffix : suffixes) {
    for (const auto& score_id : score_ids) {
      CorrelationSummary s;
      s.suffix_id = suffix.suffix_id;
      s.score_id = score_id;
      s.designed = suffix.score_id == score_id;
      std::vector<double> xs;
      std::vector<double> ys;
      if (const auto it = groups.find({suffix.suffix_id, score_id}); it != groups.end()) {
        for (const auto* r : it->second) {
          xs.push_back(r->max_word_importance);
          ys.push_back(r->suffix_impact);
        }
      }
      s.n_points = xs.size();
      if (xs.size() < 2) {
        s.reason = "fewer than 2 records";
      } else {
        try {
          s.r = pearson(xs, ys);
          const LinearFit fit = least_squares(xs, ys);
          s.slope = fit.slope;
          s.intercept = fit.intercept;
          s.computable = true;
        } catch (const InvalidArgument& e) {
          s.r.reset();
          s.reason = e.what();
        }
      }
      out.push_back(std::move(s));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.suffix_id, a.score_id) < std::tie(b.suffix_id, b.score_id);
  });
  return out;
}

ExperimentResult run_suffix_experiment(const std::vector<PromptSpec>& corpus,
                                       const std::vector<SuffixSpec>& suffixes,
                                       CompletionProvider& provider, const ScorerSet& scorers,
                                       const ExperimentOptions& options) {
  check_inputs(corpus, suffixes);
  std::vector<std::string> score_ids;
  for (const auto& scorer : scorers) score_ids.push_back(scorer->id());
  for (const auto& suffix : suffixes) {
    if (std::find(score_ids.begin(), score_ids.end(), suffix.score_id) == score_ids.end()) {
      throw InvalidArgument("suffix '" + suffix.suffix_id + "' is paired with score '" +
                            suffix.score_id + "', which is not configured");
    }
  }
  if (options.engine.budget) {
    const CallPlan plan = plan_experiment(corpus, suffixes, provider, options);
    if (plan.to_fetch() > *options.engine.budget && !options.engine.allow_over_budget) {
      throw BudgetExceeded(plan.to_fetch(), *options.engine.budget);
    }
  }

  ExperimentResult result;
  const std::size_t fetched_before = provider.fetched_samples();
  const EngineOptions& engine = options.engine;

  for (const auto& prompt : corpus) {
    if (cancelled(engine)) {
      result.partial = true;
      break;
    }
    const PromptSpec bare = bare_prompt(prompt);
    ScoredSamples without;
    try {
      without = compute_baseline(bare, provider, scorers, engine);
    } catch (const ProviderError& e) {
      result.exclusions.push_back({prompt.prompt_id, "", e.what()});
      continue;
    }
    for (const auto& suffix : suffixes) {
      if (cancelled(engine)) {
        result.partial = true;
        break;
      }
      const PromptSpec spec = with_suffix(prompt, suffix);
      const auto in_suffix = suffix_words(spec);
      if (in_suffix.empty()) {
        result.exclusions.push_back({prompt.prompt_id, suffix.suffix_id, "suffix has no words"});
        continue;
      }
      ImportanceMatrix matrix;
      try {
        matrix = word_importance(spec, provider, scorers, suffix_engine_options(spec, options));
      } catch (const ProviderError& e) {
        result.exclusions.push_back({prompt.prompt_id, suffix.suffix_id, e.what()});
        continue;
      }
      if (matrix.partial && cancelled(engine)) {
        result.partial = true;
        break;
      }
      for (std::size_t c = 0; c < score_ids.size(); ++c) {
        std::optional<double> best;
        for (std::size_t u = 0; u < matrix.rows(); ++u) {
          const TokenRange range = matrix.units[u].tokens;
          if (range.begin < in_suffix.front()) continue;
          if (const auto w = matrix.cell(u, c); w && (!best || *w > *best)) best = w;
        }
        const auto impact = aggregate_deviation(matrix.baseline, without, c, engine.aggregation);
        if (!best || !impact) {
          result.exclusions.push_back(
              {prompt.prompt_id, suffix.suffix_id,
               score_ids[c] + ": " +
                   (!best ? "no defined word importance in the suffix" : "suffix impact undefined")});
          continue;
        }
        SuffixExperimentRecord record;
        record.prompt_id = prompt.prompt_id;
        record.suffix_id = suffix.suffix_id;
        record.score_id = score_ids[c];
        record.suffix_impact = *impact;
        record.max_word_importance = *best;
        record.n = engine.n;
        record.m = prompt.user_inputs.size();
        record.model_id = engine.model_id;
        record.designed = suffix.score_id == score_ids[c];
        result.records.push_back(std::move(record));
      }
    }
    if (result.partial) break;
  }

  std::sort(result.records.begin(), result.records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.suffix_id, a.score_id, a.prompt_id) <
           std::tie(b.suffix_id, b.score_id, b.prompt_id);
  });
  result.summaries = summarize(result.records, suffixes, score_ids);
  result.provider_calls = provider.fetched_samples() - fetched_before;
  return result;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Corpus parse_corpus(std::string_view text) {
  Corpus corpus;
  std::map<std::string, std::size_t> by_prompt;
  const auto rows = parse_csv(text);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const CsvRow& row = rows[k];
    if (k == 0 && is_header(row, {"system_prompt", "prompt_topic", "user_input", "input_topic"})) {
      continue;
    }
    if (row.fields.size() != 4) {
      corpus.issues.push_back({row.line, "expected 4 fields, found " +
                                             std::to_string(row.fields.size())});
      continue;
    }
    const std::string system = trim(row.fields[0]);
    const std::string user = trim(row.fields[2]);
    if (system.empty()) {
      corpus.issues.push_back({row.line, "empty system_prompt"});
      continue;
    }
    if (user.empty()) {
      corpus.issues.push_back({row.line, "empty user_input"});
      continue;
    }
    auto [it, inserted] = by_prompt.try_emplace(system, corpus.prompts.size());
    if (inserted) {
      PromptSpec spec;
      char id[16];
      std::snprintf(id, sizeof id, "p%03zu", corpus.prompts.size() + 1);
      spec.prompt_id = id;
      spec.system_prompt = system;
      corpus.prompts.push_back(std::move(spec));
      corpus.prompt_topics.push_back(trim(row.fields[1]));
    }
    corpus.prompts[it->second].user_inputs.push_back(user);
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_text_file(path));
}

Corpus parse_question_list(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  Corpus corpus;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    ++line;
    std::string question = trim(text.substr(pos, eol - pos));
    if (!question.empty() && question.back() == '\r') question = trim(question.substr(0, question.size() - 1));
    pos = eol + 1;
    if (question.empty() || question.front() == '#') continue;
    PromptSpec spec;
    char id[16];
    std::snprintf(id, sizeof id, "q%03zu", corpus.prompts.size() + 1);
    spec.prompt_id = id;
    spec.system_prompt = std::string(kQuestionSystemPrompt);
    spec.user_inputs = {question};
    corpus.prompts.push_back(std::move(spec));
    corpus.prompt_topics.emplace_back();
  }
  return corpus;
}

Corpus load_question_list(const std::filesystem::path& path) {
  return parse_question_list(read_text_file(path));
}

std::vector<SuffixSpec> parse_suffixes(std::string_view text) {
  std::vector<SuffixSpec> out;
  const auto rows = parse_csv(text);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const CsvRow& row = rows[k];
    if (k == 0 && is_header(row, {"suffix_id", "text", "score_id"})) continue;
    if (row.fields.size() != 3) {
      throw ParseError("suffix file line " + std::to_string(row.line) + ": expected 3 fields, found " +
                       std::to_string(row.fields.size()));
    }
    SuffixSpec s{trim(row.fields[0]), trim(row.fields[1]), trim(row.fields[2])};
    if (s.suffix_id.empty() || s.text.empty() || s.score_id.empty()) {
      throw ParseError("suffix file line " + std::to_string(row.line) + ": empty field");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SuffixSpec> load_suffixes(const std::filesystem::path& path) {
  return parse_suffixes(read_text_file(path));
}

}  // namespace promptlens
