#include "icrl/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "icrl/errors.hpp"
#include "json.hpp"

namespace icrl {

using nlohmann::json;

EpisodeRecord make_record(const Trajectory& traj, const Vocabulary& vocab) {
  EpisodeRecord r;
  r.termination = traj.termination;
  r.turn_count = traj.turn_count;
  r.prompt_tokens = traj.count(Origin::Prompt);
  r.model_tokens = traj.count(Origin::Model);
  r.tool_tokens = traj.count(Origin::Tool);
  r.valid_searches = valid_search_count(traj);
  r.answer = extract_answer(traj, vocab);
  if (traj.reward) {
    r.accuracy = traj.reward->accuracy;
    r.violations = traj.reward->violations;
    r.format_reward = traj.reward->format_reward;
    r.composite = traj.reward->composite;
  }
  return r;
}

std::string to_json_line(const EpisodeRecord& r) {
  json j;
  j["step"] = r.step;
  j["stage_index"] = r.stage_index;
  j["stage_k"] = r.stage_k;
  j["group"] = r.group;
  j["member"] = r.member;
  j["seed"] = r.seed;
  j["question_id"] = r.question_id;
  j["termination"] = std::string(termination_name(r.termination));
  j["turn_count"] = r.turn_count;
  j["prompt_tokens"] = r.prompt_tokens;
  j["model_tokens"] = r.model_tokens;
  j["tool_tokens"] = r.tool_tokens;
  j["valid_searches"] = r.valid_searches;
  j["answer"] = r.answer ? json(*r.answer) : json(nullptr);
  j["accuracy"] = r.accuracy;
  j["violations"] = r.violations.names();
  j["format_reward"] = r.format_reward;
  j["composite"] = r.composite;
  j["advantage"] = r.advantage;
  j["group_kl"] = r.group_kl;
  j["group_loss"] = r.group_loss;
  j["group_skipped"] = r.group_skipped;
  return j.dump();
}

EpisodeRecord parse_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    EpisodeRecord r;
    r.step = j.at("step").get<std::uint64_t>();
    r.stage_index = j.at("stage_index").get<std::size_t>();
    r.stage_k = j.at("stage_k").get<std::size_t>();
    r.group = j.at("group").get<std::size_t>();
    r.member = j.at("member").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.question_id = j.at("question_id").get<std::size_t>();
    const auto term = termination_from_name(j.at("termination").get<std::string>());
    if (!term) throw ConfigError("unknown termination");
    r.termination = *term;
    r.turn_count = j.at("turn_count").get<std::size_t>();
    r.prompt_tokens = j.at("prompt_tokens").get<std::size_t>();
    r.model_tokens = j.at("model_tokens").get<std::size_t>();
    r.tool_tokens = j.at("tool_tokens").get<std::size_t>();
    r.valid_searches = j.at("valid_searches").get<std::size_t>();
    if (!j.at("answer").is_null()) r.answer = j.at("answer").get<std::string>();
    r.accuracy = j.at("accuracy").get<int>();
    for (const auto& name : j.at("violations")) {
      const auto v = violation_from_name(name.get<std::string>());
      if (!v) throw ConfigError("unknown violation");
      r.violations.insert(*v);
    }
    r.format_reward = j.at("format_reward").get<double>();
    r.composite = j.at("composite").get<double>();
    r.advantage = j.at("advantage").get<double>();
    r.group_kl = j.at("group_kl").get<double>();
    r.group_loss = j.at("group_loss").get<double>();
    r.group_skipped = j.at("group_skipped").get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed episode record: ") + e.what());
  }
}

std::vector<EpisodeRecord> read_episode_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(parse_json_line(line));
  }
  return out;
}

EpisodeStats episode_stats(const EpisodeRecord& r) {
  EpisodeStats s;
  s.composite = r.composite;
  s.format_reward = r.format_reward;
  s.em = r.accuracy;
  s.model_tokens = static_cast<double>(r.model_tokens);
  s.valid_searches = static_cast<double>(r.valid_searches);
  return s;
}

std::vector<FinishPoint> cumulative_finish(std::span<const EpisodeRecord> episodes,
                                           std::size_t max_turns) {
  std::vector<FinishPoint> table;
  if (episodes.empty()) return table;
  for (std::size_t n = 0; n <= max_turns; ++n) {
    std::size_t hit = 0;
    for (const EpisodeRecord& e : episodes) {
      if (e.termination == Termination::Answered && e.turn_count <= n) ++hit;
    }
    table.push_back({n, 100.0 * static_cast<double>(hit) / static_cast<double>(episodes.size())});
  }
  return table;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_row(std::uint64_t step, std::size_t stage_k, const StepMetrics& m) {
  std::string row = std::to_string(step) + "," + std::to_string(stage_k);
  for (double v : {m.mean_reward, m.mean_format_reward, m.mean_em, m.mean_model_tokens,
                   m.valid_search_mean, m.kl_value, m.loss}) {
    row += "," + format_double(v);
  }
  return row;
}

RunWriter::RunWriter(const std::filesystem::path& dir, const Vocabulary& vocab)
    : vocab_(&vocab),
      episodes_(dir / "episodes.jsonl", std::ios::trunc),
      metrics_(dir / "metrics.csv", std::ios::trunc) {
  if (!episodes_ || !metrics_) throw std::runtime_error("cannot create run logs in " + dir.string());
  metrics_ << kMetricsHeader << '\n';
}

void RunWriter::write_step(std::uint64_t step, std::size_t stage_index, std::size_t stage_k,
                           std::span<const Question> questions,
                           std::span<const std::uint64_t> seeds, const StepResult& result) {
  std::size_t idx = 0;
  for (std::size_t g = 0; g < result.groups.size(); ++g) {
    const GroupBatch& gb = result.groups[g];
    const GroupLoss& gl = result.losses[g];
    for (std::size_t m = 0; m < gb.trajectories.size(); ++m, ++idx) {
      EpisodeRecord r = make_record(gb.trajectories[m], *vocab_);
      r.step = step;
      r.stage_index = stage_index;
      r.stage_k = stage_k;
      r.group = g;
      r.member = m;
      r.seed = idx < seeds.size() ? seeds[idx] : 0;
      r.question_id = g < questions.size() ? questions[g].id : gb.question_id;
      r.advantage = gb.advantages[m];
      r.group_kl = gl.kl;
      r.group_loss = gl.loss;
      r.group_skipped = gl.skipped;
      episodes_ << to_json_line(r) << '\n';
    }
  }
  metrics_ << metrics_row(step, stage_k, result.metrics) << '\n';
  if (!episodes_ || !metrics_) throw std::runtime_error("failed writing run logs");
}

void RunWriter::flush() {
  episodes_.flush();
  metrics_.flush();
  if (!episodes_ || !metrics_) throw std::runtime_error("failed writing run logs");
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [k, v] : m) os << k << '=' << v << '\n';
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad manifest line: " + line);
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

AuditResult audit_run(const std::filesystem::path& dir) {
  AuditResult res;
  const std::vector<EpisodeRecord> episodes = read_episode_log(dir / "episodes.jsonl");
  std::ifstream csv(dir / "metrics.csv");
  if (!csv) throw ConfigError("cannot open " + (dir / "metrics.csv").string());
  std::string line;
  if (!std::getline(csv, line) || line != kMetricsHeader) {
    res.problems.push_back("metrics.csv header mismatch");
    return res;
  }
  std::vector<std::string> rows;
  while (std::getline(csv, line)) {
    if (!line.empty()) rows.push_back(line);
  }

  std::size_t i = 0;
  std::vector<std::string> expected;
  while (i < episodes.size()) {
    const std::uint64_t step = episodes[i].step;
    const std::size_t k = episodes[i].stage_k;
    std::vector<EpisodeStats> stats;
    std::vector<GroupStats> groups;
    for (; i < episodes.size() && episodes[i].step == step; ++i) {
      const EpisodeRecord& e = episodes[i];
      stats.push_back(episode_stats(e));
      if (e.member == 0) groups.push_back({e.group_kl, e.group_loss, e.group_skipped});
    }
    expected.push_back(metrics_row(step, k, aggregate_metrics(stats, groups)));
  }
  if (expected.size() != rows.size()) {
    res.problems.push_back("episode log has " + std::to_string(expected.size()) +
                           " steps, metrics.csv has " + std::to_string(rows.size()) + " rows");
  }
  for (std::size_t r = 0; r < std::min(expected.size(), rows.size()); ++r) {
    ++res.rows_checked;
    if (expected[r] != rows[r]) {
      res.problems.push_back("row " + std::to_string(r + 1) + ": csv '" + rows[r] +
                             "' recomputed '" + expected[r] + "'");
    }
  }
  res.ok = res.problems.empty();
  return res;
}

}  // namespace icrl
