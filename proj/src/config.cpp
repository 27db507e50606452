#include "icrl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "icrl/errors.hpp"
#include "json.hpp"

namespace icrl {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, int>) {
        if (!it->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(field(key) + " has the wrong type");
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Reader(it == j_.end() ? empty : *it, field(key));
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config field " + field(k.c_str()));
    }
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  world.validate();
  curriculum.validate();
  if (eval.shots > world.n_demo) throw ConfigError("eval.shots exceeds world.n_demo");
  if (curriculum.schedule.stages.front() > world.n_demo) {
    throw ConfigError("schedule.stages asks for more demos than world.n_demo");
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Reader r(root, "");
  std::string out = c.output_dir.string();
  r.get("output_dir", out);
  c.output_dir = out;
  CurriculumConfig& cc = c.curriculum;
  r.get("master_seed", cc.master_seed);

  {
    Reader w = r.child("world");
    w.get("seed", c.world.seed);
    w.get("n_entities", c.world.n_entities);
    w.get("n_relations", c.world.n_relations);
    w.get("hops", c.world.hops);
    w.get("n_train", c.world.n_train);
    w.get("n_demo", c.world.n_demo);
    w.get("n_eval", c.world.n_eval);
    w.finish();
  }
  {
    Reader m = r.child("model");
    m.get("d_model", cc.arch.d_model);
    m.get("n_heads", cc.arch.n_heads);
    m.get("n_layers", cc.arch.n_layers);
    m.get("d_ff", cc.arch.d_ff);
    m.get("window", cc.arch.window);
    m.get("rel_buckets", cc.arch.rel_buckets);
    m.get("copy_dim", cc.arch.copy_dim);
    m.get("init_scale", cc.init_scale);
    m.finish();
  }
  {
    Reader g = r.child("grpo");
    GrpoConfig& gc = cc.grpo;
    g.get("group_size", gc.group_size);
    g.get("clip_epsilon", gc.clip_epsilon);
    g.get("kl_beta", gc.kl_beta);
    g.get("advantage_std_floor", gc.advantage_std_floor);
    g.get("learning_rate", gc.learning_rate);
    g.get("batch_size", gc.batch_size);
    g.get("adam_beta1", gc.adam_beta1);
    g.get("adam_beta2", gc.adam_beta2);
    g.get("adam_eps", gc.adam_eps);
    g.get("grad_clip", gc.grad_clip);
    g.get("workers", gc.workers);
    g.finish();
  }
  {
    Reader rw = r.child("reward");
    rw.get("alpha", cc.reward.alpha);
    Reader p = rw.child("penalties");
    for (Violation v : kAllViolations) {
      const std::string name(violation_name(v));
      p.get(name.c_str(), cc.reward.penalties[static_cast<std::size_t>(v)]);
    }
    p.finish();
    rw.finish();
  }
  {
    Reader l = r.child("limits");
    l.get("max_turns", cc.limits.max_turns);
    l.get("max_response_tokens", cc.limits.max_response_tokens);
    l.get("max_prompt_tokens", cc.limits.max_prompt_tokens);
    l.get("temperature", cc.limits.temperature);
    l.finish();
  }
  {
    Reader s = r.child("schedule");
    s.get("stages", cc.schedule.stages);
    s.get("steps_per_stage", cc.schedule.steps_per_stage);
    s.finish();
  }
  {
    Reader cu = r.child("curriculum");
    cu.get("refresh_reference_per_stage", cc.refresh_reference_per_stage);
    if (cu.has("advance_threshold")) {
      double t = 0.0;
      cu.get("advance_threshold", t);
      cc.advance_threshold = t;
    }
    cu.get("advance_window", cc.advance_window);
    cu.finish();
  }
  {
    Reader e = r.child("eval");
    e.get("shots", c.eval.shots);
    e.get("temperature", c.eval.temperature);
    e.get("seed", c.eval.seed);
    e.finish();
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

Manifest to_manifest(const RunConfig& c) {
  const CurriculumConfig& cc = c.curriculum;
  auto num = [](auto v) {
    if constexpr (std::is_floating_point_v<decltype(v)>) {
      return format_double(v);
    } else {
      return std::to_string(v);
    }
  };
  Manifest m;
  m["output_dir"] = c.output_dir.string();
  m["master_seed"] = num(cc.master_seed);
  m["world.seed"] = num(c.world.seed);
  m["world.n_entities"] = num(c.world.n_entities);
  m["world.n_relations"] = num(c.world.n_relations);
  m["world.hops"] = num(c.world.hops);
  m["world.n_train"] = num(c.world.n_train);
  m["world.n_demo"] = num(c.world.n_demo);
  m["world.n_eval"] = num(c.world.n_eval);
  m["model.d_model"] = num(cc.arch.d_model);
  m["model.n_heads"] = num(cc.arch.n_heads);
  m["model.n_layers"] = num(cc.arch.n_layers);
  m["model.d_ff"] = num(cc.arch.d_ff);
  m["model.window"] = num(cc.arch.window);
  m["model.rel_buckets"] = num(cc.arch.rel_buckets);
  m["model.copy_dim"] = num(cc.arch.copy_dim);
  m["model.init_scale"] = num(cc.init_scale);
  m["grpo.group_size"] = num(cc.grpo.group_size);
  m["grpo.clip_epsilon"] = num(cc.grpo.clip_epsilon);
  m["grpo.kl_beta"] = num(cc.grpo.kl_beta);
  m["grpo.advantage_std_floor"] = num(cc.grpo.advantage_std_floor);
  m["grpo.learning_rate"] = num(cc.grpo.learning_rate);
  m["grpo.batch_size"] = num(cc.grpo.batch_size);
  m["grpo.adam_beta1"] = num(cc.grpo.adam_beta1);
  m["grpo.adam_beta2"] = num(cc.grpo.adam_beta2);
  m["grpo.adam_eps"] = num(cc.grpo.adam_eps);
  m["grpo.grad_clip"] = num(cc.grpo.grad_clip);
  m["grpo.workers"] = num(cc.grpo.workers);
  m["reward.alpha"] = num(cc.reward.alpha);
  for (Violation v : kAllViolations) {
    m["reward.penalties." + std::string(violation_name(v))] = num(cc.reward.penalty(v));
  }
  m["limits.max_turns"] = num(cc.limits.max_turns);
  m["limits.max_response_tokens"] = num(cc.limits.max_response_tokens);
  m["limits.max_prompt_tokens"] = num(cc.limits.max_prompt_tokens);
  m["limits.temperature"] = num(cc.limits.temperature);
  std::string stages;
  for (std::size_t k : cc.schedule.stages) stages += (stages.empty() ? "" : ",") + std::to_string(k);
  m["schedule.stages"] = stages;
  m["schedule.steps_per_stage"] = num(cc.schedule.steps_per_stage);
  m["curriculum.refresh_reference_per_stage"] = cc.refresh_reference_per_stage ? "true" : "false";
  m["curriculum.advance_threshold"] = cc.advance_threshold ? num(*cc.advance_threshold) : "off";
  m["curriculum.advance_window"] = num(cc.advance_window);
  m["eval.shots"] = num(c.eval.shots);
  m["eval.temperature"] = num(c.eval.temperature);
  m["eval.seed"] = num(c.eval.seed);
  return m;
}

}  // namespace icrl
