#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "icrl/config.hpp"
#include "icrl/errors.hpp"
#include "icrl/runner.hpp"
#include "icrl/world.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

// ICRL_OUT_DIR, when set, replaces the config's output_dir.
std::filesystem::path output_dir(const icrl::RunConfig& config) {
  if (const char* env = std::getenv("ICRL_OUT_DIR"); env && *env) return env;
  return config.output_dir;
}

int cmd_train(const std::string& config_path, const std::optional<std::string>& resume) {
  const icrl::RunConfig config = icrl::load_run_config(config_path);
  const std::filesystem::path dir = output_dir(config);
  std::optional<std::filesystem::path> state;
  if (resume) state = *resume;
  const icrl::TrainingOutcome out = icrl::run_training(config, dir, state);
  std::cout << "run written to " << dir.string() << " (" << out.state.global_step << " steps)\n";
  std::cout << icrl::format_eval_report(out.report);
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& config_path, std::optional<std::size_t> shots,
             std::size_t show) {
  icrl::RunConfig config = icrl::load_run_config(config_path);
  if (shots) config.eval.shots = *shots;
  const icrl::Environment env = icrl::prepare_environment(config);
  const icrl::PolicyParams params = icrl::load_checkpoint(ckpt);
  icrl::EvalConfig eval = config.eval;
  eval.seed = icrl::derive_seed(config.curriculum.master_seed, {5, eval.seed});
  const icrl::EvalReport report =
      icrl::evaluate(params, env, config.curriculum.limits, config.curriculum.reward, eval);
  std::cout << icrl::format_eval_report(report);
  for (std::size_t i = 0; i < std::min(show, report.episodes.size()); ++i) {
    const icrl::EvalEpisode& e = report.episodes[i];
    std::cout << "\n[" << e.split << " " << e.question.id << "] " << e.question.prompt_text
              << "  gold: " << e.question.gold_answer << "\n";
    std::vector<icrl::TokenId> tail(e.traj.tokens.begin() + static_cast<std::ptrdiff_t>(e.traj.prompt_len),
                                    e.traj.tokens.end());
    std::cout << env.vocab.decode(tail) << "\n";
  }
  return kExitOk;
}

int cmd_audit(const std::string& dir) {
  const icrl::AuditResult r = icrl::audit_run(dir);
  for (const std::string& p : r.problems) std::cout << "mismatch: " << p << '\n';
  std::cout << (r.ok ? "audit ok" : "audit FAILED") << ": " << r.rows_checked << " rows checked\n";
  return r.ok ? kExitOk : kExitRuntime;
}

int cmd_gen_world(std::uint64_t seed, const std::string& out, std::size_t entities,
                  std::size_t relations) {
  const icrl::SyntheticWorld world = icrl::generate_world(seed, entities, relations);
  icrl::save_world(out, world);
  std::cout << "wrote " << world.relations.size() << " triples over " << world.entities.size()
            << " entities to " << out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"in-context reinforcement learning engine"};
  app.require_subcommand(1);

  std::string train_config;
  std::string resume;
  auto* train = app.add_subcommand("train", "run a curriculum training job");
  train->add_option("config", train_config, "JSON run config")->required();
  train->add_option("--resume", resume, "trainer state file to continue from");

  std::string eval_ckpt, eval_config;
  std::size_t shots = 0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", eval_ckpt)->required();
  eval->add_option("config", eval_config)->required();
  auto* shots_opt = eval->add_option("--shots", shots, "demonstrations in the prompt");
  std::size_t show = 0;
  eval->add_option("--show", show, "print this many transcripts");

  std::string audit_dir;
  auto* audit = app.add_subcommand("audit", "recompute metrics.csv from the episode log");
  audit->add_option("rundir", audit_dir)->required();

  std::uint64_t world_seed = 0;
  std::string world_out;
  std::size_t entities = 50, relations = 80;
  auto* gen = app.add_subcommand("gen-world", "write a synthetic world file");
  gen->add_option("seed", world_seed)->required();
  gen->add_option("out", world_out)->required();
  gen->add_option("--entities", entities);
  gen->add_option("--relations", relations);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      return cmd_train(train_config,
                       resume.empty() ? std::nullopt : std::optional<std::string>(resume));
    }
    if (*eval) {
      return cmd_eval(eval_ckpt, eval_config,
                      shots_opt->count() ? std::optional<std::size_t>(shots) : std::nullopt, show);
    }
    if (*audit) return cmd_audit(audit_dir);
    if (*gen) return cmd_gen_world(world_seed, world_out, entities, relations);
  } catch (const icrl::ConfigError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
