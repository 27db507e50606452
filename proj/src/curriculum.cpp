#include "icrl/curriculum.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "icrl/errors.hpp"
#include "icrl/grammar.hpp"
#include "icrl/search.hpp"

namespace icrl {
namespace {

constexpr char kStateMagic[8] = {'I', 'C', 'R', 'L', 'S', 'T', 'A', 'T'};
constexpr std::uint32_t kStateVersion = 1;

// Longest possible search observation: tags plus k bodies of three words.
constexpr std::size_t kMaxObservationTokens = 2 + 3 * kDefaultTopK;

void add_words(Vocabulary& v, std::string_view text) {
  for (const std::string& w : split_words(text)) v.add(w);
}

}  // namespace

// ---------------------------------------------------------------------------
// Demos, schedule, partition, prompts

std::uint64_t DemoLibrary::hash() const {
  std::uint64_t h = fnv1a64("");
  for (std::size_t i = 0; i < questions.size(); ++i) {
    h = fnv1a64(questions[i].prompt_text, h);
    h = fnv1a64("\n", h);
    h = fnv1a64(solutions[i], h);
    h = fnv1a64("\n", h);
  }
  return h;
}

DemoLibrary build_demo_library(const SyntheticWorld& world, std::span<const Question> questions) {
  DemoLibrary lib;
  for (const Question& q : questions) {
    std::string solution = oracle_solve(world, q);
    if (!detect_violations(solution).empty()) {
      throw ContractError("oracle transcript has format violations: " + solution);
    }
    lib.questions.push_back(q);
    lib.solutions.push_back(std::move(solution));
  }
  return lib;
}

void StageSchedule::validate() const {
  if (stages.empty()) throw ConfigError("schedule.stages must not be empty");
  if (stages.back() != 0) throw ConfigError("schedule.stages must end with 0");
  for (std::size_t i = 1; i < stages.size(); ++i) {
    if (stages[i] >= stages[i - 1]) throw ConfigError("schedule.stages must be strictly decreasing");
  }
  if (steps_per_stage == 0) throw ConfigError("schedule.steps_per_stage must be positive");
}

DatasetPartition partition_dataset(std::size_t n_questions, const StageSchedule& schedule,
                                   std::uint64_t seed) {
  const std::size_t n_stages = schedule.stages.size();
  if (n_stages == 0) throw ConfigError("schedule.stages must not be empty");
  if (n_questions < n_stages) {
    throw ConfigError("need at least one training question per stage (" +
                      std::to_string(n_questions) + " questions, " + std::to_string(n_stages) +
                      " stages)");
  }
  std::vector<std::size_t> order(n_questions);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t size = n_questions / n_stages;
  DatasetPartition p;
  for (std::size_t s = 0; s < n_stages; ++s) {
    const std::size_t b = s * size;
    const std::size_t e = s + 1 == n_stages ? n_questions : b + size;
    p.slices.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                          order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return p;
}

const std::string& prompt_header() {
  static const std::string header =
      "Solve the following problem step by step . You must conduct reasoning inside <think> ... "
      "</think> every time you get new information . After reasoning , if you find you lack "
      "some knowledge , you can call a search engine by <search> query </search> and it will "
      "return results between <information> ... </information> . You can search as many times "
      "as you want . Finally , provide the answer inside <answer> ... </answer> .";
  return header;
}

std::string prompt_text(const DemoLibrary& library, std::size_t k, const Question& question) {
  if (k > library.max_count()) {
    throw ConfigError("prompt asks for " + std::to_string(k) + " demos, library has " +
                      std::to_string(library.max_count()));
  }
  std::string text = prompt_header();
  if (k > 0) {
    text += " Here are some examples :";
    for (std::size_t i = 0; i < k; ++i) {
      text += " Example Problem : " + library.questions[i].prompt_text;
      text += " Example Solution : " + library.solutions[i];
    }
  }
  text += " Now solve the following problem : Actual Problem : " + question.prompt_text;
  return text;
}

std::vector<TokenId> build_prompt(const DemoLibrary& library, std::size_t k,
                                  const Question& question, const Vocabulary& vocab,
                                  std::size_t max_tokens) {
  std::vector<TokenId> ids = vocab.encode(prompt_text(library, k, question));
  if (ids.size() > max_tokens) {
    throw ConfigError("prompt with " + std::to_string(k) + " demos has " +
                      std::to_string(ids.size()) + " tokens, limits.max_prompt_tokens is " +
                      std::to_string(max_tokens));
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Environment

void WorldConfig::validate() const {
  if (n_entities < 2) throw ConfigError("world.n_entities must be >= 2");
  if (n_relations < 1) throw ConfigError("world.n_relations must be >= 1");
  if (hops < 1) throw ConfigError("world.hops must be >= 1");
  if (n_train == 0) throw ConfigError("world.n_train must be positive");
}

Vocabulary build_vocabulary(const SyntheticWorld& world) {
  Vocabulary v;
  add_words(v, prompt_header());
  add_words(v, "Here are some examples : Example Problem : Example Solution :");
  add_words(v, "Now solve the following problem : Actual Problem :");
  add_words(v, "what is the of ? find the answer is");
  add_words(v, kNoResultsSentinel);
  for (const std::string& label : world.relation_labels()) v.add(label);
  for (const std::string& e : world.entities) v.add(e);
  if (v.size() > kMaxVocab) {
    throw ConfigError("vocabulary has " + std::to_string(v.size()) + " words, limit is " +
                      std::to_string(kMaxVocab));
  }
  return v;
}

Environment build_environment(const WorldConfig& config) {
  config.validate();
  Environment env;
  env.world = generate_world(config.seed, config.n_entities, config.n_relations);
  env.vocab = build_vocabulary(env.world);
  const std::size_t total = config.n_demo + config.n_eval + config.n_train;
  std::vector<Question> all = generate_questions(env.world, config.hops, total, config.seed);
  const auto demo_end = all.begin() + static_cast<std::ptrdiff_t>(config.n_demo);
  const auto eval_end = demo_end + static_cast<std::ptrdiff_t>(config.n_eval);
  env.library = build_demo_library(env.world, std::vector<Question>(all.begin(), demo_end));
  env.eval.assign(demo_end, eval_end);
  env.train.assign(eval_end, all.end());
  return env;
}

// ---------------------------------------------------------------------------
// Training driver

void CurriculumConfig::validate() const {
  schedule.validate();
  grpo.validate();
  reward.validate();
  limits.validate();
  if (!(init_scale >= 0.0)) throw ConfigError("model.init_scale must be >= 0");
  if (advance_threshold && advance_window == 0) {
    throw ConfigError("curriculum.advance_window must be positive");
  }
  const std::size_t need = 1 + limits.max_prompt_tokens + limits.max_response_tokens +
                           limits.max_turns * kMaxObservationTokens;
  if (arch.window < need) {
    throw ConfigError("model.window must be >= " + std::to_string(need) +
                      " (bos + prompt + response + observations)");
  }
}

void save_trainer_state(const std::filesystem::path& path, const TrainerState& state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kStateMagic, sizeof kStateMagic);
  binio::put_u32(os, kStateVersion);
  binio::put_u64(os, state.stage_index);
  binio::put_u64(os, state.global_step);
  binio::put_u64(os, state.adam.t());
  binio::put_u64(os, state.adam.m().size());
  for (double x : state.adam.m()) binio::put_f64(os, x);
  for (double x : state.adam.v()) binio::put_f64(os, x);
  write_checkpoint(os, state.params);
  write_checkpoint(os, state.ref);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

TrainerState load_trainer_state(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open trainer state " + path.string());
  char magic[sizeof kStateMagic];
  if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kStateMagic)) {
    throw ConfigError("not a trainer state file: " + path.string());
  }
  if (binio::get_u32(is) != kStateVersion) throw ConfigError("unsupported trainer state version");
  TrainerState s;
  s.stage_index = binio::get_u64(is);
  s.global_step = binio::get_u64(is);
  const std::uint64_t t = binio::get_u64(is);
  const std::uint64_t n = binio::get_u64(is);
  std::vector<double> m(n), v(n);
  for (double& x : m) x = binio::get_f64(is);
  for (double& x : v) x = binio::get_f64(is);
  s.params = read_checkpoint(is);
  s.ref = read_checkpoint(is);
  if (n != s.params.size()) throw ConfigError("optimizer state does not match the checkpoint");
  s.adam.restore(t, std::move(m), std::move(v));
  return s;
}

TrainerState initial_state(const CurriculumConfig& config, const Environment& env) {
  ArchSpec arch = config.arch;
  arch.vocab = env.vocab.size();
  TrainerState s;
  s.params = PolicyParams::initialize(arch, derive_seed(config.master_seed, {3}), config.init_scale);
  s.ref = s.params;
  s.adam = Adam(s.params.size());
  return s;
}

std::uint64_t step_seed(std::uint64_t master, std::size_t stage_index, std::size_t step) {
  return derive_seed(master, {1, stage_index, step});
}

TrainerState run_curriculum(const CurriculumConfig& config, const Environment& env,
                            TrainerState state, RunSink* sink) {
  config.validate();
  if (state.params.size() == 0) throw ContractError("trainer state has no parameters");
  const StageSchedule& schedule = config.schedule;
  if (schedule.stages.front() > env.library.max_count()) {
    throw ConfigError("schedule asks for " + std::to_string(schedule.stages.front()) +
                      " demos, library has " + std::to_string(env.library.max_count()));
  }
  const DatasetPartition partition =
      partition_dataset(env.train.size(), schedule, derive_seed(config.master_seed, {2}));
  const Tool tool = search_tool(env.world);
  StepContext ctx;
  ctx.vocab = &env.vocab;
  ctx.tool = &tool;
  ctx.limits = config.limits;
  ctx.reward = config.reward;
  ctx.grpo = config.grpo;
  const std::size_t batch = config.grpo.batch_size;

  for (std::size_t si = state.stage_index; si < schedule.stages.size(); ++si) {
    const std::size_t k = schedule.stages[si];
    if (config.refresh_reference_per_stage) state.ref = state.params;
    const std::vector<std::size_t>& slice = partition.slices[si];
    std::vector<double> recent;

    for (std::size_t step = 0; step < schedule.steps_per_stage; ++step) {
      std::vector<RolloutTask> tasks;
      std::vector<Question> questions;
      for (std::size_t b = 0; b < batch; ++b) {
        const Question& q = env.train[slice[(step * batch + b) % slice.size()]];
        tasks.push_back({q.id, build_prompt(env.library, k, q, env.vocab,
                                            config.limits.max_prompt_tokens),
                         q.gold_answer});
        questions.push_back(q);
      }
      const std::uint64_t seed = step_seed(config.master_seed, si, step);
      const StepResult result = train_step(tasks, state.params, state.ref, state.adam, ctx, seed);
      if (sink) {
        std::vector<std::uint64_t> seeds;
        for (std::size_t g = 0; g < tasks.size(); ++g) {
          for (std::size_t m = 0; m < config.grpo.group_size; ++m) seeds.push_back(derive_seed(seed, {g, m}));
        }
        StepEvent ev{si, k, state.global_step, step, &questions, &seeds, &result};
        sink->on_step(ev);
      }
      ++state.global_step;

      if (config.advance_threshold) {
        recent.push_back(result.metrics.mean_reward);
        if (recent.size() >= config.advance_window) {
          const double mean =
              std::accumulate(recent.end() - static_cast<std::ptrdiff_t>(config.advance_window),
                              recent.end(), 0.0) /
              static_cast<double>(config.advance_window);
          if (mean >= *config.advance_threshold) break;
        }
      }
    }
    state.stage_index = si + 1;
    if (sink) sink->on_stage_end(si, k, state);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalRow summarize(std::string split, std::span<const EvalEpisode> episodes) {
  EvalRow row;
  row.split = std::move(split);
  row.episodes = episodes.size();
  if (episodes.empty()) return row;
  for (const EvalEpisode& e : episodes) {
    const RewardBreakdown& r = *e.traj.reward;
    row.mean_em += r.accuracy;
    row.mean_composite += r.composite;
    row.mean_format += r.format_reward;
    row.answered_pct += e.traj.termination == Termination::Answered ? 1.0 : 0.0;
    row.valid_search_mean += static_cast<double>(valid_search_count(e.traj));
    row.mean_model_tokens += static_cast<double>(e.traj.count(Origin::Model));
  }
  const auto n = static_cast<double>(episodes.size());
  row.mean_em /= n;
  row.mean_composite /= n;
  row.mean_format /= n;
  row.answered_pct *= 100.0 / n;
  row.valid_search_mean /= n;
  row.mean_model_tokens /= n;
  return row;
}

EvalReport evaluate(TokenPolicy& policy, const Environment& env, const RolloutLimits& limits,
                    const RewardConfig& reward, const EvalConfig& config) {
  RolloutLimits lim = limits;
  lim.temperature = config.temperature > 0.0 ? config.temperature : kGreedyTemperature * 1e-3;
  const Tool tool = search_tool(env.world);
  EvalReport report;
  const std::pair<const char*, const std::vector<Question>*> splits[] = {{"train", &env.train},
                                                                          {"test", &env.eval}};
  std::vector<EpisodeRecord> records;
  for (std::size_t s = 0; s < 2; ++s) {
    const std::size_t first = report.episodes.size();
    for (const Question& q : *splits[s].second) {
      const auto prompt = build_prompt(env.library, config.shots, q, env.vocab, lim.max_prompt_tokens);
      Trajectory traj = run_rollout(policy, env.vocab, prompt, tool, lim,
                                    derive_seed(config.seed, {4, s, q.id}));
      traj.reward = composite_reward(traj, env.vocab, q.gold_answer, reward);
      records.push_back(make_record(traj, env.vocab));
      report.episodes.push_back({splits[s].first, q, std::move(traj)});
    }
    report.rows.push_back(summarize(
        splits[s].first,
        std::span<const EvalEpisode>(report.episodes).subspan(first, report.episodes.size() - first)));
  }
  report.rows.push_back(summarize("all", report.episodes));
  report.cumulative_finish = cumulative_finish(records, limits.max_turns);
  return report;
}

EvalReport evaluate(const PolicyParams& params, const Environment& env,
                    const RolloutLimits& limits, const RewardConfig& reward,
                    const EvalConfig& config) {
  if (params.arch().vocab != env.vocab.size()) {
    throw ConfigError("checkpoint vocabulary size " + std::to_string(params.arch().vocab) +
                      " does not match the environment (" + std::to_string(env.vocab.size()) + ")");
  }
  ModelPolicy policy(params);
  return evaluate(policy, env, limits, reward, config);
}

}  // namespace icrl
