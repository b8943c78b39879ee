#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "mfos/config.hpp"
#include "mfos/environments.hpp"
#include "mfos/mean_field.hpp"
#include "mfos/report.hpp"

using namespace mfos;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every opened tag is closed in order; enough to catch broken SVG output.
bool tags_balanced(const std::string& svg) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = svg.find('<', pos)) != std::string::npos) {
    const std::size_t end = svg.find('>', pos);
    if (end == std::string::npos) return false;
    const std::string tag = svg.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    const std::string name = tag.substr(tag[0] == '/' ? 1 : 0, tag.find_first_of(" \n", 0) - (tag[0] == '/' ? 1 : 0));
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

struct Run {
  int code;
  std::string out, err;
};

Run mfos_cmd(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  return {code, o.str(), e.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfos-test-" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("comments, blanks and overrides") {
    RunConfig c;
    c.load_text("# header\n\nenv = ex2   # trailing\n lr=3e-3\nNs = 1,2,3\n", "a.cfg");
    CHECK(c.get("env") == "ex2");
    CHECK(c.get_double("lr") == 3e-3);
    CHECK(c.get_ints("Ns") == std::vector<int>{1, 2, 3});
    CHECK(c.get_int("n_iter") == 500);
    CHECK_FALSE(c.is_set("n_iter"));
    c.set("n_iter", "7");
    CHECK(c.get_int("n_iter") == 7);
  }

  TEST_CASE("errors name the source line") {
    RunConfig c;
    try {
      c.load_text("env = ex1\nbogus = 3\n", "x.cfg");
      FAIL("accepted an unknown key");
    } catch (const ConfigError& e) {
      const std::string m = e.what();
      CHECK(m.find("x.cfg:2") != std::string::npos);
      CHECK(m.find("bogus") != std::string::npos);
      CHECK(m.find("n_iter") != std::string::npos);
    }
    CHECK_THROWS_AS(RunConfig().load_text("env = ex1\nenv = ex2\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig().load_text("just words\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig().load_text(" = 3\n"), ConfigError);
    RunConfig bad;
    bad.set("lr", "fast");
    CHECK_THROWS_AS(bad.get_double("lr"), ConfigError);
    bad.set("n_iter", "12x");
    CHECK_THROWS_AS(bad.get_int("n_iter"), ConfigError);
    CHECK_THROWS_AS(bad.set("nope", "1"), ConfigError);
  }

  TEST_CASE("manifest round trip") {
    RunConfig c;
    c.load_text("command = eval\nenv = ex3\nseed = 42\nlrs = 0.1,0.2\n");
    const std::string m = c.manifest();
    CHECK(m.rfind("# mfos-manifest v1\n", 0) == 0);
    RunConfig d;
    d.load_text(m, "manifest");
    CHECK(d.manifest() == m);
    for (const auto& k : config_keys()) CHECK(d.get(k.name) == c.get(k.name));
  }
}

TEST_SUITE("report") {
  TEST_CASE("csv quoting") {
    CHECK(report::csv_field("plain") == "plain");
    CHECK(report::csv_field("a,b") == "\"a,b\"");
    CHECK(report::csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(report::csv_field("two\nlines") == "\"two\nlines\"");
  }

  TEST_CASE("charts are well formed") {
    report::ChartOptions opt;
    opt.title = "loss & <friends>";
    opt.log_y = true;
    opt.reference = 0.5;
    const std::string line = report::line_chart({{"a", {1, 2, 3}, {1.0, 0.7, 0.6}}, {"b", {1, 2}, {0.9, 0.8}}}, opt);
    CHECK(line.rfind("<svg", 0) == 0);
    CHECK(tags_balanced(line));
    CHECK(line.find("&lt;friends&gt;") != std::string::npos);
    const std::string bars = report::stacked_bar_chart({"0", "1"}, {{"s", {0.2, 0.5}}, {"a", {0.8, 0.5}}}, {});
    CHECK(tags_balanced(bars));
    const std::string hm = report::heatmap({0, 0.5, 1, 0.25}, 2, 2, 0, 1, {});
    CHECK(tags_balanced(hm));
    CHECK(tags_balanced(report::tile({line, bars, hm}, 2, 320, 200, "panels")));
  }

  TEST_CASE("trajectory figures for line and grid spaces") {
    for (const char* name : {"ex1", "ex5"}) {
      const auto env = make_environment(name);
      const auto traj = rollout(env, constant_policy({0.3}), initial_extend(env.default_initial));
      CHECK(tags_balanced(report::trajectory_figure(traj, env.space, 1, name)));
    }
  }
}

TEST_SUITE("cli") {
  TEST_CASE("exit codes") {
    const auto unknown = mfos_cmd({"eval", "--env", "ex9", "--policy", "never", "--out", scratch("e1").string()});
    CHECK(unknown.code == cli::kConfigError);
    CHECK(unknown.err.find("randomized-better") != std::string::npos);
    CHECK(mfos_cmd({"eval", "--env", "ex1", "--set", "colour=blue", "--out", scratch("e2").string()}).code ==
          cli::kConfigError);
    CHECK(mfos_cmd({"train", "--help"}).code == cli::kOk);
    CHECK(mfos_cmd({}).code == cli::kConfigError);
    CHECK(mfos_cmd({"eval", "--env", "ex1", "--policy", "sometimes", "--out", scratch("e3").string()}).code ==
          cli::kConfigError);

    const auto diverged = mfos_cmd({"train", "--env", "ex1", "--algo", "da", "--lr", "1e300", "--n-iter", "5", "--width",
                               "16", "--blocks", "1", "--batch", "4", "--out", scratch("e4").string()});
    CHECK(diverged.code == cli::kDiverged);
    CHECK(diverged.err.find("iteration") != std::string::npos);

    const auto junk = fs::temp_directory_path() / "mfos-test-junk.ckpt";
    std::ofstream(junk) << "not a checkpoint\n";
    const auto bad_ckpt = mfos_cmd({"eval", "--env", "ex1", "--checkpoint", junk.string(), "--out", scratch("e6").string()});
    CHECK(bad_ckpt.code == cli::kConfigError);
    CHECK(bad_ckpt.err.find("cannot read checkpoint") != std::string::npos);

    setenv("MFOS_THREADS", "lots", 1);
    CHECK(mfos_cmd({"oracle", "--env", "ex2", "--out", scratch("e5").string()}).code == cli::kConfigError);
    setenv("MFOS_THREADS", "1", 1);
    CHECK(mfos_cmd({"oracle", "--env", "ex2", "--out", scratch("e5").string()}).code == cli::kOk);
    unsetenv("MFOS_THREADS");
  }

  TEST_CASE("oracle prints the die value") {
    const auto dir = scratch("oracle");
    const auto r = mfos_cmd({"oracle", "--env", "ex2", "--out", dir.string()});
    REQUIRE(r.code == cli::kOk);
    CHECK(r.out.find("value 1.65277777") != std::string::npos);
    CHECK(slurp(dir / "oracle.csv").rfind("# mfos-dpp v1", 0) == 0);
    CHECK(slurp(dir / "manifest.txt").find("command = oracle") != std::string::npos);
  }

  TEST_CASE("a manifest reproduces its run") {
    const auto dir = scratch("manifest");
    const std::vector<std::string> args{"train", "--env", "ex1", "--algo", "da", "--n-iter", "6", "--eval-every", "3",
                                        "--width", "16", "--blocks", "1", "--batch", "4", "--out", dir.string()};
    REQUIRE(mfos_cmd(args).code == cli::kOk);
    const std::string manifest = slurp(dir / "manifest.txt");
    const std::string report = slurp(dir / "train_report.csv");
    const std::string ckpt = slurp(dir / "checkpoint.ckpt");
    CHECK(fs::exists(dir / "loss.svg"));
    CHECK(fs::exists(dir / "evolution" / "iter-000003.svg"));
    const std::string copy = (fs::temp_directory_path() / "mfos-test-manifest.cfg").string();
    fs::copy_file(dir / "manifest.txt", copy, fs::copy_options::overwrite_existing);
    fs::remove_all(dir);
    REQUIRE(mfos_cmd({"train", "--config", copy}).code == cli::kOk);
    CHECK(slurp(dir / "manifest.txt") == manifest);
    CHECK(slurp(dir / "train_report.csv") == report);
    CHECK(slurp(dir / "checkpoint.ckpt") == ckpt);
    // a config for another command is refused
    CHECK(mfos_cmd({"eval", "--config", copy}).code == cli::kConfigError);
  }

  TEST_CASE("dp checkpoints one network per stage and evaluates from the directory") {
    const auto dir = scratch("dp");
    REQUIRE(mfos_cmd({"train", "--env", "ex1", "--algo", "dp", "--n-iter", "4", "--width", "16", "--blocks", "1",
                 "--batch", "4", "--out", dir.string()})
                .code == cli::kOk);
    int stages = 0;
    for (const auto& e : fs::directory_iterator(dir / "checkpoints")) stages += e.path().extension() == ".ckpt";
    CHECK(stages == make_environment("ex1").horizon);
    CHECK(fs::exists(dir / "stage_values.svg"));
    const auto ev = scratch("dp-eval");
    const auto r = mfos_cmd({"eval", "--env", "ex1", "--checkpoint", (dir / "checkpoints").string(), "--out", ev.string()});
    CHECK(r.code == cli::kOk);
    CHECK(r.out.find("J = ") != std::string::npos);
    CHECK(slurp(ev / "eval.csv").rfind("# mfos-eval v1", 0) == 0);
    // wrong environment for these checkpoints
    CHECK(mfos_cmd({"eval", "--env", "ex3", "--checkpoint", (dir / "checkpoints").string(), "--out", ev.string()}).code ==
          cli::kConfigError);
  }

  TEST_CASE("sweep, simulate and converge write their outputs") {
    const auto dir = scratch("sweep");
    REQUIRE(mfos_cmd({"sweep", "--env", "ex1", "--n-iter", "3", "--width", "16", "--blocks", "1", "--batch", "4", "--out",
                 dir.string()})
                .code == cli::kOk);
    int svgs = 0;
    for (const auto& e : fs::directory_iterator(dir))
      svgs += e.path().filename().string().rfind("loss-lr-", 0) == 0 && e.path().extension() == ".svg";
    CHECK(svgs == 3);
    CHECK(fs::exists(dir / "sweep.csv"));

    const auto sim = scratch("sim");
    CHECK(mfos_cmd({"simulate", "--env", "ex2", "--policy", "all", "--agents", "50", "--out", sim.string()}).code ==
          cli::kOk);
    CHECK(slurp(sim / "simulation.csv").rfind("# mfos-simulation v1", 0) == 0);

    const auto conv = scratch("conv");
    CHECK(mfos_cmd({"converge", "--env", "ex2", "--policy", "constant:0.2", "--Ns", "10,100", "--reps", "2", "--out",
               conv.string()})
              .code == cli::kOk);
    CHECK(tags_balanced(slurp(conv / "convergence.svg")));
  }
}
