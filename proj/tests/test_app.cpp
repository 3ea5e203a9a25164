#include <filesystem>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "kvfile.hpp"

using namespace vflow;
using namespace vflow::app;

namespace {

RunConfig small_config() {
  RunConfig cfg;
  cfg.samples = 4;
  cfg.search.evaluations = 8;
  cfg.search.init_count = 4;
  return cfg;
}

}  // namespace

TEST_CASE("key value files") {
  const auto kv = kv::KeyValues::parse("# comment\n a = 1 \n\nb=x y\n", "mem");
  CHECK(kv.get("a") == "1");
  CHECK(kv.get("b") == "x y");
  CHECK(fixtures::error_kind([&] { kv.get("c"); }) == ErrorKind::config);
  CHECK(fixtures::error_kind([] { kv::KeyValues::parse("novalue\n", "mem"); }) == ErrorKind::config);
  CHECK(kv::parse_double("0.25", "f") == 0.25);
  CHECK(fixtures::error_kind([] { kv::parse_double("0.25x", "f"); }) == ErrorKind::config);
  CHECK(fixtures::error_kind([] { kv::parse_int("1.5", "f"); }) == ErrorKind::config);
  CHECK(kv::parse_bool("0", "f") == false);
  CHECK(kv::parse_bool("true", "f") == true);
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) {
    CHECK(kv::parse_double(kv::format_double(v), "f") == v);
  }
}

TEST_CASE("config round trip and overrides") {
  RunConfig cfg = small_config();
  apply_setting(cfg, "budget", "0.4");
  apply_setting(cfg, "layout", "3,5,4");
  apply_setting(cfg, "merge", "0");
  CHECK(cfg.budget.r_bar == 0.4);
  CHECK(cfg.layout == schedule::StageLayout{3, 5, 4});
  CHECK(!cfg.ablation.merge);
  CHECK(fixtures::error_kind([&] { apply_setting(cfg, "bogus", "1"); }) == ErrorKind::config);
  CHECK(fixtures::error_kind([&] { apply_setting(cfg, "layout", "1,2"); }) == ErrorKind::config);

  const auto dir = fixtures::scratch("config");
  std::ofstream(dir / "run.cfg") << format_config(cfg);
  const auto loaded = load_config(dir / "run.cfg");
  CHECK(format_config(loaded) == format_config(cfg));
  CHECK(config_keys().size() > 20);
}

TEST_CASE("config validation") {
  RunConfig cfg;
  cfg.layout = {4, 4, 5};
  CHECK(fixtures::error_kind([&] { validate(cfg); }) == ErrorKind::config);
  cfg = {};
  cfg.image_dir = "/nonexistent/images";
  CHECK(fixtures::error_kind([&] { validate(cfg); }) == ErrorKind::io);
  cfg = {};
  cfg.bounds.a_min = 5;
  cfg.bounds.a_max = 2;
  CHECK(fixtures::error_kind([&] { validate(cfg); }) == ErrorKind::config);
}

TEST_CASE("relative image directories resolve against the config file") {
  const auto dir = fixtures::scratch("config-rel");
  std::filesystem::create_directories(dir / "imgs");
  std::ofstream(dir / "run.cfg") << "image_dir=imgs\n";
  CHECK(std::filesystem::path(load_config(dir / "run.cfg").image_dir) == dir / "imgs");
}

TEST_CASE("strategy files") {
  StrategyRecord rec;
  rec.strategy = {0.4, 0.5, 0.8, 1.25, 0.3, 3};
  rec.layout = {9, 9, 10};
  rec.budget = {0.25};
  rec.objective = 27.123456789;
  rec.seed = 11;
  rec.ablation.merge = false;
  rec.strategy.r3 = *schedule::solve_r3(0.4, 0.5, rec.layout, rec.budget);

  const auto dir = fixtures::scratch("strategy");
  write_strategy(dir / "s.txt", rec);
  const auto back = read_strategy(dir / "s.txt");
  CHECK(back.strategy == rec.strategy);
  CHECK(back.layout == rec.layout);
  CHECK(back.objective == rec.objective);
  CHECK(back.seed == 11);
  CHECK(back.ablation == rec.ablation);
  CHECK(format_strategy(back) == format_strategy(rec));

  auto tampered = format_strategy(rec);
  const auto at = tampered.find("r1=");
  tampered.replace(at, tampered.find('\n', at) - at, "r1=0.9");
  CHECK(fixtures::error_kind([&] { parse_strategy(tampered, "mem"); }) == ErrorKind::infeasible);
  CHECK(fixtures::error_kind([&] { read_strategy(dir / "missing.txt"); }) == ErrorKind::io);
}

TEST_CASE("ledger lines round trip") {
  bo::Observation obs{{0.1, 0.2, 0.3, 0.4, 0.5625}, {0.4, 0.5, 0.8, 1.0, 0.2, 5}, 12.5};
  const auto dir = fixtures::scratch("ledger");
  std::ofstream(dir / "l.jsonl") << ledger_line(0, obs) << "\n" << ledger_line(1, obs) << "\n";
  const auto back = read_ledger(dir / "l.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].x == obs.x);
  CHECK(back[1].strategy == obs.strategy);
  CHECK(back[1].y == obs.y);
  std::ofstream(dir / "bad.jsonl") << "{\"index\": 0\n";
  CHECK(fixtures::error_kind([&] { read_ledger(dir / "bad.jsonl"); }) == ErrorKind::io);
}

TEST_CASE("session optimize streams and resumes") {
  const auto dir = fixtures::scratch("session");
  Session session(small_config());
  const auto run = session.optimize((dir / "a.jsonl").string(), "");
  CHECK(run.history.size() == 8);
  CHECK(read_ledger(dir / "a.jsonl").size() == 8);

  // Keep the first five lines, as if the run had stopped early.
  std::ifstream in(dir / "a.jsonl");
  std::ofstream partial(dir / "partial.jsonl");
  std::string line;
  for (int i = 0; i < 5 && std::getline(in, line); ++i) partial << line << "\n";
  partial.close();

  Session again(small_config());
  const auto resumed = again.optimize((dir / "b.jsonl").string(), (dir / "partial.jsonl").string());
  REQUIRE(resumed.history.size() == run.history.size());
  for (std::size_t i = 0; i < run.history.size(); ++i) {
    CHECK(resumed.history[i].x == run.history[i].x);
    CHECK(resumed.history[i].y == run.history[i].y);
  }
  const auto rec = session.record_for(run);
  CHECK(rec.objective == run.best().y);
  CHECK(rec.budget.r_bar == 0.25);
}

TEST_CASE("prune report") {
  const auto a = fixtures::redundancy_instance();
  StrategyRecord rec;
  rec.layout = {4, 4, 4};
  rec.budget = {1.0};
  const auto identity = prune_report(a, fixtures::redundancy_entropy(), 3, rec);
  for (const auto& st : identity.stages) {
    CHECK(st.retained == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5});
    CHECK(st.pruned.empty());
  }

  rec.strategy = {0.5, 2.0 / 3.0, 0.5, 1.0, 0.0, 1};
  rec.ablation.merge = false;
  rec.budget = {schedule::average_retention(rec.strategy, rec.layout)};
  const auto r = prune_report(a, fixtures::redundancy_entropy(), 3, rec);
  CHECK(r.stages[0].retained.size() == 3);
  CHECK(r.stages[1].retained.size() == 2);
  CHECK(r.stages[2].retained.size() == 1);
  CHECK(r.stages[2].retained == std::vector<std::int64_t>{4});
  CHECK(fixtures::error_kind([&] { prune_report(a, fixtures::redundancy_entropy(), 4, rec); }) == ErrorKind::shape);
}
