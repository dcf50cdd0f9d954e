#include "promptlens/importance.hpp"

#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

#include "promptlens/error.hpp"
#include "promptlens/format.hpp"

namespace promptlens {
namespace {

bool cancelled(const EngineOptions& options) {
  return options.cancel != nullptr && options.cancel->load();
}

CompletionRequest make_request(const std::string& system, const std::string& user,
                               const EngineOptions& options) {
  return {system, user, options.n, options.temperature, options.model_id};
}

std::vector<ScoreVector> sample_and_score(const std::string& system, const std::string& user,
                                          CompletionProvider& provider, const ScorerSet& scorers,
                                          const EngineOptions& options) {
  const auto completions = provider.complete(make_request(system, user, options));
  std::vector<ScoreVector> out;
  out.reserve(completions.size());
  for (const auto& completion : completions) out.push_back(score_text(scorers, completion.text));
  return out;
}

void check_options(const EngineOptions& options) {
  if (options.n < 1) throw InvalidArgument("n must be >= 1");
  if (!std::isfinite(options.temperature) || options.temperature < 0.0) {
    throw InvalidArgument("temperature must be finite and >= 0");
  }
  if (options.masking.granularity == Granularity::kSpan && options.masking.span_size < 1) {
    throw InvalidArgument("span_size must be >= 1");
  }
}

}  // namespace

std::string PromptSpec::full_system_prompt() const {
  if (!suffix || suffix->empty()) return system_prompt;
  return system_prompt + " " + *suffix;
}

void PromptSpec::validate() const {
  if (system_prompt.empty()) throw InvalidArgument("prompt '" + prompt_id + "': empty system prompt");
  if (user_inputs.empty()) throw InvalidArgument("prompt '" + prompt_id + "': no user inputs");
}

std::optional<double> ImportanceMatrix::cell(std::size_t unit, std::size_t score) const {
  const auto r = static_cast<Eigen::Index>(unit);
  const auto c = static_cast<Eigen::Index>(score);
  if (!present(r, c)) return std::nullopt;
  return values(r, c);
}

std::size_t ImportanceMatrix::score_column(std::string_view score_id) const {
  for (std::size_t k = 0; k < score_ids.size(); ++k) {
    if (score_ids[k] == score_id) return k;
  }
  throw InvalidArgument("matrix has no score '" + std::string(score_id) + "'");
}

std::vector<MaskUnit> plan_units(const PromptSpec& spec, const MaskingOptions& masking) {
  const std::string full = spec.full_system_prompt();
  const auto tokens = tokenize(full, default_stopwords());
  std::vector<MaskUnit> units;
  if (masking.granularity == Granularity::kWord) {
    std::vector<std::size_t> selected;
    if (masking.only_tokens) {
      selected = *masking.only_tokens;
    } else {
      for (std::size_t k = 0; k < tokens.size(); ++k) selected.push_back(k);
    }
    for (const std::size_t k : selected) {
      if (k >= tokens.size()) throw InvalidArgument("token " + std::to_string(k) + " out of range");
      if (masking.exclude_stopwords && tokens[k].is_stopword) continue;
      units.push_back({{k, k + 1},
                       tokens[k].text,
                       tokens[k].is_stopword,
                       mask(full, tokens, {k}, masking.glyph).rendered});
    }
  } else {
    for (std::size_t begin = 0; begin < tokens.size(); begin += masking.span_size) {
      const TokenRange range{begin, std::min(tokens.size(), begin + masking.span_size)};
      bool all_stop = true;
      for (std::size_t k = range.begin; k < range.end; ++k) all_stop = all_stop && tokens[k].is_stopword;
      const std::size_t from = tokens[range.begin].span.begin;
      const std::size_t to = tokens[range.end - 1].span.end;
      units.push_back({range, full.substr(from, to - from), all_stop,
                       mask_span(full, tokens, range, masking.glyph).rendered});
    }
  }
  return units;
}

CallPlan plan_calls(const PromptSpec& spec, const CompletionProvider& provider,
                    const EngineOptions& options) {
  spec.validate();
  check_options(options);
  const auto units = plan_units(spec, options.masking);
  CallPlan plan;
  plan.variants = units.size();
  std::vector<std::string> prompts{spec.full_system_prompt()};
  for (const auto& unit : units) prompts.push_back(unit.masked_prompt);
  for (const auto& prompt : prompts) {
    for (const auto& user : spec.user_inputs) {
      const auto request = make_request(prompt, user, options);
      for (int i = 0; i < options.n; ++i) {
        ++plan.total_samples;
        if (provider.is_cached(request, i)) ++plan.cached_samples;
      }
    }
  }
  return plan;
}

ScoredSamples compute_baseline(const PromptSpec& spec, CompletionProvider& provider,
                               const ScorerSet& scorers, const EngineOptions& options) {
  spec.validate();
  check_options(options);
  ScoredSamples out;
  out.system_prompt = spec.full_system_prompt();
  for (std::size_t j = 0; j < spec.user_inputs.size(); ++j) {
    try {
      out.scores.push_back(
          sample_and_score(out.system_prompt, spec.user_inputs[j], provider, scorers, options));
    } catch (const ProviderError& e) {
      throw ProviderError(e.kind(), "baseline for prompt '" + spec.prompt_id + "', user input " +
                                        std::to_string(j) + ": " + e.what());
    }
  }
  return out;
}

std::optional<double> aggregate_deviation(const ScoredSamples& baseline,
                                          const ScoredSamples& variant, std::size_t score,
                                          Aggregation aggregation) {
  if (variant.error || baseline.error) return std::nullopt;
  if (baseline.scores.size() != variant.scores.size() || baseline.scores.empty()) {
    return std::nullopt;
  }
  double sum = 0.0;
  std::size_t valid = 0;
  std::size_t total = 0;
  for (std::size_t j = 0; j < baseline.scores.size(); ++j) {
    const auto& base = baseline.scores[j];
    const auto& var = variant.scores[j];
    if (base.size() != var.size()) return std::nullopt;
    total += var.size();
    if (aggregation == Aggregation::kPaired) {
      for (std::size_t i = 0; i < var.size(); ++i) {
        const auto b = base[i].values.at(score);
        const auto v = var[i].values.at(score);
        if (!b || !v) continue;
        sum += std::abs(*b - *v);
        ++valid;
      }
    } else {
      double base_sum = 0.0;
      std::size_t base_count = 0;
      for (const auto& s : base) {
        if (const auto b = s.values.at(score)) {
          base_sum += *b;
          ++base_count;
        }
      }
      if (base_count == 0) continue;
      const double mean = base_sum / static_cast<double>(base_count);
      for (const auto& s : var) {
        const auto v = s.values.at(score);
        if (!v) continue;
        sum += std::abs(mean - *v);
        ++valid;
      }
    }
  }
  if (valid == 0 || 2 * valid < total) return std::nullopt;
  return sum / static_cast<double>(valid);
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  const std::size_t threads = std::min<std::size_t>(count, workers < 1 ? 1 : workers);
  if (threads == 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < count; k = next++) {
          try {
            fn(k);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

ImportanceMatrix word_importance(const PromptSpec& spec, CompletionProvider& provider,
                                 const ScorerSet& scorers, const EngineOptions& options) {
  spec.validate();
  check_options(options);
  if (scorers.empty()) throw InvalidArgument("word_importance needs at least one scorer");

  ImportanceMatrix m;
  m.prompt_id = spec.prompt_id;
  m.system_prompt = spec.full_system_prompt();
  m.user_inputs = spec.user_inputs;
  m.tokens = tokenize(m.system_prompt, default_stopwords());
  m.units = plan_units(spec, options.masking);
  for (const auto& scorer : scorers) m.score_ids.push_back(scorer->id());
  m.n = options.n;
  m.aggregation = options.aggregation;
  m.granularity = options.masking.granularity;
  m.glyph = options.masking.glyph;
  m.provenance = {options.model_id, options.temperature, utc_timestamp(), options.config_digest,
                  kToolVersion};

  if (options.budget) {
    const CallPlan plan = plan_calls(spec, provider, options);
    if (plan.to_fetch() > *options.budget && !options.allow_over_budget) {
      throw BudgetExceeded(plan.to_fetch(), *options.budget);
    }
  }

  const std::size_t fetched_before = provider.fetched_samples();
  const std::size_t inputs = spec.user_inputs.size();
  const std::size_t prompts = 1 + m.units.size();

  // Slot (p, j): prompt p (0 = baseline, 1.. = units) with user input j.
  struct Slot {
    std::vector<ScoreVector> scores;
    std::exception_ptr error;
    bool skipped = false;
  };
  std::vector<Slot> slots(prompts * inputs);
  parallel_for(slots.size(), provider.parallelism(), [&](std::size_t k) {
    Slot& slot = slots[k];
    if (cancelled(options)) {
      slot.skipped = true;
      return;
    }
    const std::size_t p = k / inputs;
    const std::size_t j = k % inputs;
    const std::string& system = p == 0 ? m.system_prompt : m.units[p - 1].masked_prompt;
    try {
      slot.scores = sample_and_score(system, spec.user_inputs[j], provider, scorers, options);
    } catch (const ProviderError&) {
      slot.error = std::current_exception();
    }
  });

  const auto assemble = [&](std::size_t p, const std::string& system) {
    ScoredSamples s;
    s.system_prompt = system;
    for (std::size_t j = 0; j < inputs; ++j) {
      Slot& slot = slots[p * inputs + j];
      if (slot.skipped) {
        s.error = "cancelled";
      } else if (slot.error) {
        try {
          std::rethrow_exception(slot.error);
        } catch (const std::exception& e) {
          s.error = "user input " + std::to_string(j) + ": " + e.what();
        }
      }
      if (s.error) {
        s.scores.clear();
        break;
      }
      s.scores.push_back(std::move(slot.scores));
    }
    return s;
  };

  for (std::size_t j = 0; j < inputs; ++j) {
    const Slot& slot = slots[j];
    if (!slot.error) continue;
    try {
      std::rethrow_exception(slot.error);
    } catch (const ProviderError& e) {
      throw ProviderError(e.kind(), "baseline for prompt '" + spec.prompt_id + "', user input " +
                                        std::to_string(j) + ": " + e.what());
    }
  }
  m.baseline = assemble(0, m.system_prompt);
  for (std::size_t u = 0; u < m.units.size(); ++u) {
    m.variants.push_back(assemble(u + 1, m.units[u].masked_prompt));
  }

  const auto rows = static_cast<Eigen::Index>(m.units.size());
  const auto cols = static_cast<Eigen::Index>(m.score_ids.size());
  m.values = MatrixXd::Zero(rows, cols);
  m.present = MaskXb::Constant(rows, cols, false);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto w = aggregate_deviation(m.baseline, m.variants[r], static_cast<std::size_t>(c),
                                         options.aggregation);
      if (w) {
        m.values(r, c) = *w;
        m.present(r, c) = true;
      }
    }
  }
  m.partial = static_cast<bool>(m.baseline.error);
  for (const auto& v : m.variants) m.partial = m.partial || static_cast<bool>(v.error);
  m.provider_calls = provider.fetched_samples() - fetched_before;
  return m;
}

std::vector<std::size_t> suffix_words(const PromptSpec& spec) {
  if (!spec.suffix || spec.suffix->empty()) {
    throw InvalidArgument("prompt '" + spec.prompt_id + "' has no suffix");
  }
  const std::size_t suffix_begin = spec.system_prompt.size() + 1;
  std::vector<std::size_t> out;
  for (const auto& token : tokenize(spec.full_system_prompt())) {
    if (token.span.begin >= suffix_begin) out.push_back(token.index);
  }
  return out;
}

}  // namespace promptlens
