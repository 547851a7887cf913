#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int status = 0;
    std::string out;
    std::string err;
};

class Workspace {
public:
    Workspace() {
        dir_ = fs::temp_directory_path() / ("procplan_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        write("fixture.jsonl", "{\"steps\": [\"A\", \"B\", \"C\"]}\n{\"steps\": [\"A\", \"B\", \"D\"]}\n"
                               "{\"steps\": [\"B\", \"C\", \"D\"]}\n");
    }
    ~Workspace() { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

    std::string read(const std::string& name) const {
        std::ifstream in(dir_ / name);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    Run run(const std::string& args, const std::string& env = "") const {
        const std::string out = path("stdout.txt"), err = path("stderr.txt");
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" PROCPLAN_CLI_PATH "' " + args + " >'" +
                                out + "' 2>'" + err + "'";
        const int raw = std::system(cmd.c_str());
        return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, read("stdout.txt"), read("stderr.txt")};
    }

private:
    static inline int counter_ = 0;
    fs::path dir_;
};

}  // namespace

TEST_CASE("build-graph then query returns the most probable walk") {
    Workspace ws;
    REQUIRE(ws.run("build-graph --corpus fixture.jsonl --out g.json").status == 0);
    const auto r = ws.run("query --graph g.json --start A --end D --horizon 4 --top-r 1");
    REQUIRE(r.status == 0);
    const auto j = json::parse(r.out);
    CHECK(j["walks"][0]["steps"] == json({"A", "B", "C", "D"}));
    CHECK(j["walks"][0]["probability"].get<double>() == doctest::Approx(0.667).epsilon(1e-3));
    CHECK(j["fallback_used"] == false);
    CHECK(j["matrix"].size() == 4);

    const auto csv = ws.run("query --graph g.json --start A --end D --horizon 4 --top-r 2 --format csv");
    REQUIRE(csv.status == 0);
    CHECK(csv.out.rfind("rank,probability,weight,steps,padded\n", 0) == 0);
    CHECK(csv.out.find("A B D,A A B D") != std::string::npos);

    const auto fb = json::parse(ws.run("query --graph g.json --start D --end A --horizon 4").out);
    CHECK(fb["fallback_used"] == true);
    CHECK(fb["selected"][0] == json({"D", "D", "A", "A"}));

    const auto mm = json::parse(ws.run("query --graph g.json --start A --end D --horizon 4 --scoring minmax").out);
    CHECK(mm["walk"] == json({"A", "B", "C", "D"}));
}

TEST_CASE("eval on identical prediction and ground truth is all ones") {
    Workspace ws;
    for (const char* mode : {"per-sequence", "per-batch"}) {
        const auto r = ws.run(std::string("eval --pred fixture.jsonl --gt fixture.jsonl --mode ") + mode + " --batch-size 2");
        REQUIRE(r.status == 0);
        const auto j = json::parse(r.out);
        CHECK(j["success_rate"] == 1.0);
        CHECK(j["mean_accuracy"] == 1.0);
        CHECK(j["miou"] == 1.0);
        CHECK(j["n_samples"] == 3);
    }
    const auto csv = ws.run("eval --pred fixture.jsonl --gt fixture.jsonl --format csv --out report.csv");
    REQUIRE(csv.status == 0);
    CHECK(ws.read("report.csv").find("\n1,1,1,3,0,,\n") != std::string::npos);
}

TEST_CASE("gen-synthetic is byte-identical per seed") {
    Workspace ws;
    REQUIRE(ws.run("gen-synthetic --seed 7 --corpus-out a.jsonl --observations-out a_obs.jsonl").status == 0);
    REQUIRE(ws.run("gen-synthetic --seed 7 --corpus-out b.jsonl --observations-out b_obs.jsonl").status == 0);
    CHECK(ws.read("a.jsonl") == ws.read("b.jsonl"));
    CHECK(ws.read("a_obs.jsonl") == ws.read("b_obs.jsonl"));
    REQUIRE(ws.run("gen-synthetic --seed 8 --corpus-out c.jsonl --observations-out c_obs.jsonl").status == 0);
    CHECK(ws.read("a_obs.jsonl") != ws.read("c_obs.jsonl"));
    CHECK(ws.run("gen-synthetic").status != 0);  // seed is mandatory
}

TEST_CASE("errors are machine readable") {
    Workspace ws;
    const auto unknown = ws.run("build-graph --corpus fixture.jsonl --no-such-flag");
    CHECK(unknown.status != 0);
    CHECK(json::parse(unknown.err)["error"] == "usage");

    const auto missing = ws.run("build-graph --corpus missing.jsonl");
    CHECK(missing.status != 0);
    CHECK(json::parse(missing.err).contains("error"));

    ws.write("bad.jsonl", "{\"steps\": [\"A\"]}\n");
    const auto bad = ws.run("build-graph --corpus bad.jsonl --out g.json");
    CHECK(bad.status != 0);
    CHECK(json::parse(bad.err)["error"] == "plan_too_short");
    CHECK_FALSE(fs::exists(ws.path("g.json")));

    REQUIRE(ws.run("build-graph --corpus fixture.jsonl --out g.json").status == 0);
    const auto node = ws.run("query --graph g.json --start A --end Z");
    CHECK(json::parse(node.err)["error"] == "unknown_action");
}

TEST_CASE("config files supply defaults and flags win") {
    Workspace ws;
    REQUIRE(ws.run("build-graph --corpus fixture.jsonl --out g.json").status == 0);
    ws.write("run.toml", "[query]\ngraph = \"g.json\"\nstart = \"A\"\nend = \"D\"\nhorizon = 3\n");
    const auto from_config = json::parse(ws.run("--config run.toml query").out);
    CHECK(from_config["walks"][0]["steps"] == json({"A", "B", "D"}));
    const auto overridden = json::parse(ws.run("--config run.toml query --horizon 4").out);
    CHECK(overridden["walks"][0]["steps"] == json({"A", "B", "C", "D"}));
}

TEST_CASE("default output directory comes from the environment") {
    Workspace ws;
    const auto r = ws.run("build-graph --corpus fixture.jsonl", "PROCPLAN_OUT_DIR=artifacts");
    REQUIRE(r.status == 0);
    CHECK(fs::exists(ws.path("artifacts/graph.json")));
    REQUIRE(ws.run("heatmap --corpus fixture.jsonl --out-dir maps").status == 0);
    CHECK(ws.read("maps/heatmap.csv").rfind("from,A,B,C,D\n", 0) == 0);
}

TEST_CASE("export-dot") {
    Workspace ws;
    REQUIRE(ws.run("build-graph --corpus fixture.jsonl --out g.json").status == 0);
    const auto r = ws.run("export-dot --graph g.json");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("B -> C [label=\"0.667\"];") != std::string::npos);
    const auto sink = ws.run("export-dot --graph g.json --center D --depth 0 --out d.dot");
    REQUIRE(sink.status == 0);
    CHECK(ws.read("d.dot") == "digraph procedure {\n  D;\n}\n");
}

TEST_CASE("training, planning and evaluation through the CLI") {
    Workspace ws;
    REQUIRE(ws.run("gen-synthetic --seed 3 --tasks 2 --steps-per-task 3 --plans 12 --test-plans 4 --obs-dim 4").status == 0);
    REQUIRE(ws.run("build-graph --corpus corpus.jsonl --out graph.json").status == 0);
    const std::string small = " --horizon 3 --epochs 2 --batch-size 4 --hidden 16 --time-dim 4 --diffusion-steps 5 --seed 1";
    const auto step = ws.run("train-step --corpus corpus.jsonl --observations observations.jsonl --out step.json" + small +
                             " --loss-trace loss.csv");
    REQUIRE(step.status == 0);
    CHECK(json::parse(step.out)["steps"] == 6);
    CHECK(ws.read("loss.csv").rfind("step,loss\n", 0) == 0);
    REQUIRE(ws.run("train-plan --corpus corpus.jsonl --observations observations.jsonl --graph graph.json "
                   "--step-model step.json --out plan.json" + small)
                .status == 0);
    REQUIRE(ws.run("train-plan --corpus corpus.jsonl --observations observations.jsonl --unconditioned --out u.json" +
                   small)
                .status == 0);

    const std::string models = " --graph graph.json --step-model step.json --plan-model plan.json";
    const auto p1 = ws.run("plan" + models + " --observations test_observations.jsonl --index 1 --seed 9");
    REQUIRE(p1.status == 0);
    const auto p2 = ws.run("plan" + models + " --observations test_observations.jsonl --index 1 --seed 9");
    CHECK(p1.out == p2.out);
    CHECK(json::parse(p1.out)["steps"].size() == 3);

    const auto zs = json::parse(ws.run("plan --graph graph.json --zero-shot --gt-endpoints --horizon 3 --start t0_s0 "
                                       "--end t0_s2 --seed 1")
                                    .out);
    CHECK(zs["steps"] == json({"t0_s0", "t0_s1", "t0_s2"}));
    CHECK(zs["mode"] == "zero-shot");

    const auto ev = ws.run("eval" + models + " --corpus test_corpus.jsonl --observations test_observations.jsonl --seed 2");
    REQUIRE(ev.status == 0);
    const auto report = json::parse(ev.out);
    CHECK(report["n_samples"] == 4);
    CHECK(report.contains("start_accuracy"));

    const auto zs_eval = json::parse(ws.run("eval --graph graph.json --zero-shot --gt-endpoints --horizon 3 --corpus "
                                            "test_corpus.jsonl --observations test_observations.jsonl")
                                         .out);
    CHECK(zs_eval["success_rate"] == 1.0);

    const auto un = ws.run("eval --unconditioned --plan-model u.json --corpus test_corpus.jsonl --observations "
                           "test_observations.jsonl");
    CHECK(un.status == 0);

    const auto mismatch = ws.run("plan" + models + " --horizon 4 --observations test_observations.jsonl --seed 1");
    CHECK(mismatch.status != 0);
    CHECK(json::parse(mismatch.err)["error"] == "dimension_mismatch");
}
