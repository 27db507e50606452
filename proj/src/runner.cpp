#include "icrl/runner.hpp"

#include <fstream>
#include <sstream>

#include "icrl/errors.hpp"
#include "icrl/kernels.hpp"

namespace icrl {
namespace {

class FileSink : public RunSink {
 public:
  FileSink(const std::filesystem::path& dir, const Vocabulary& vocab)
      : dir_(dir), writer_(dir, vocab) {}

  void on_step(const StepEvent& ev) override {
    writer_.write_step(ev.global_step, ev.stage_index, ev.k, *ev.questions, *ev.member_seeds,
                       *ev.result);
  }

  void on_stage_end(std::size_t stage_index, std::size_t, const TrainerState& state) override {
    writer_.flush();
    const std::string stem = "stage" + std::to_string(stage_index);
    save_checkpoint(dir_ / "checkpoints" / (stem + ".ckpt"), state.params);
    save_trainer_state(dir_ / "checkpoints" / (stem + ".state"), state);
  }

  void flush() { writer_.flush(); }

 private:
  std::filesystem::path dir_;
  RunWriter writer_;
};

}  // namespace

Environment prepare_environment(const RunConfig& config) {
  config.validate();
  Environment env = build_environment(config.world);
  ArchSpec arch = config.curriculum.arch;
  arch.vocab = env.vocab.size();
  arch.validate();
  const std::size_t budget = config.curriculum.limits.max_prompt_tokens;
  for (std::size_t k : config.curriculum.schedule.stages) {
    for (const Question& q : env.train) build_prompt(env.library, k, q, env.vocab, budget);
  }
  for (const Question& q : env.eval) build_prompt(env.library, config.eval.shots, q, env.vocab, budget);
  return env;
}

void write_eval_report(const std::filesystem::path& dir, const EvalReport& report) {
  {
    std::ofstream os(dir / "eval.csv", std::ios::trunc);
    os << "split,episodes,mean_em,mean_composite,mean_format,answered_pct,valid_search_mean,"
          "mean_model_tokens\n";
    for (const EvalRow& r : report.rows) {
      os << r.split << ',' << r.episodes << ',' << format_double(r.mean_em) << ','
         << format_double(r.mean_composite) << ',' << format_double(r.mean_format) << ','
         << format_double(r.answered_pct) << ',' << format_double(r.valid_search_mean) << ','
         << format_double(r.mean_model_tokens) << '\n';
    }
    if (!os) throw std::runtime_error("failed writing eval.csv");
  }
  std::ofstream os(dir / "finish.csv", std::ios::trunc);
  os << "turns,cumulative_finish_pct\n";
  for (const FinishPoint& p : report.cumulative_finish) {
    os << p.turns << ',' << format_double(p.percent) << '\n';
  }
  if (!os) throw std::runtime_error("failed writing finish.csv");
}

std::string format_eval_report(const EvalReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %8s %8s %10s %8s %9s %13s %9s\n", "split", "episodes",
                "mean_em", "composite", "format", "answered", "valid_search", "tokens");
  os << buf;
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-6s %8zu %8.4f %10.4f %8.4f %8.2f%% %13.4f %9.2f\n",
                  r.split.c_str(), r.episodes, r.mean_em, r.mean_composite, r.mean_format,
                  r.answered_pct, r.valid_search_mean, r.mean_model_tokens);
    os << buf;
  }
  os << "cumulative finish %:";
  for (const FinishPoint& p : report.cumulative_finish) {
    std::snprintf(buf, sizeof buf, " %zu:%.2f", p.turns, p.percent);
    os << buf;
  }
  os << '\n';
  return os.str();
}

TrainingOutcome run_training(const RunConfig& config, const std::filesystem::path& out_dir,
                             const std::optional<std::filesystem::path>& resume) {
  const Environment env = prepare_environment(config);
  TrainerState state = resume ? load_trainer_state(*resume) : initial_state(config.curriculum, env);
  {
    ArchSpec arch = config.curriculum.arch;
    arch.vocab = env.vocab.size();
    if (!(state.params.arch() == arch)) {
      throw ConfigError("resume state architecture does not match the config");
    }
  }

  std::filesystem::create_directories(out_dir / "checkpoints");
  Manifest manifest = to_manifest(config);
  manifest["demo_library_hash"] = std::to_string(env.library.hash());
  manifest["vocab_size"] = std::to_string(env.vocab.size());
  manifest["param_count"] = std::to_string(state.params.size());
  manifest["kernels"] = kernels::active().name;
  manifest["resume_from"] = resume ? resume->string() : "";
  manifest["resume_stage_index"] = std::to_string(state.stage_index);
  write_manifest(out_dir / "manifest.txt", manifest);

  FileSink sink(out_dir, env.vocab);
  TrainingOutcome out;
  out.state = run_curriculum(config.curriculum, env, std::move(state), &sink);
  sink.flush();
  save_checkpoint(out_dir / "final.ckpt", out.state.params);

  EvalConfig eval = config.eval;
  eval.seed = derive_seed(config.curriculum.master_seed, {5, eval.seed});
  out.report = evaluate(out.state.params, env, config.curriculum.limits, config.curriculum.reward, eval);
  write_eval_report(out_dir, out.report);
  return out;
}

}  // namespace icrl
