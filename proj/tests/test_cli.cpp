#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aloha/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace aloha::cli;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aloha_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "aloha");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Subset of JSON Schema used by the files under schemas/: type, const, enum,
// properties, required, additionalProperties, items, minItems, minimum, pattern.
void validate_schema(const json& v, const json& s, const std::string& path, std::vector<std::string>& errors) {
  const auto type_ok = [&](const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    return false;
  };
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || type_ok(t.get<std::string>());
    } else {
      ok = type_ok(s["type"].get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": expected " + s["type"].dump() + ", got " + v.dump().substr(0, 40));
      return;
    }
  }
  if (s.contains("const") && v != s["const"]) errors.push_back(path + ": expected " + s["const"].dump());
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) errors.push_back(path + ": " + v.dump() + " not in enum");
  }
  if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>()) {
    errors.push_back(path + ": below minimum");
  }
  if (s.contains("pattern") && v.is_string() &&
      !std::regex_search(v.get<std::string>(), std::regex(s["pattern"].get<std::string>()))) {
    errors.push_back(path + ": pattern mismatch");
  }
  if (v.is_object()) {
    if (s.contains("required")) {
      for (const auto& key : s["required"]) {
        if (!v.contains(key.get<std::string>())) errors.push_back(path + ": missing " + key.get<std::string>());
      }
    }
    const json props = s.value("properties", json::object());
    for (const auto& [key, value] : v.items()) {
      if (props.contains(key)) {
        validate_schema(value, props[key], path + "." + key, errors);
      } else if (s.contains("additionalProperties") && s["additionalProperties"] == false) {
        errors.push_back(path + ": unexpected key " + key);
      }
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) errors.push_back(path + ": too short");
    if (s.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        validate_schema(v[i], s["items"], path + "[" + std::to_string(i) + "]", errors);
      }
    }
  }
}

std::vector<std::string> schema_errors(const json& v, const std::string& schema_file) {
  const json s = load(fs::path(ALOHA_SOURCE_DIR) / "schemas" / schema_file);
  std::vector<std::string> errors;
  validate_schema(v, s, "$", errors);
  return errors;
}

// Small-budget invocations of every mode.
std::vector<std::vector<std::string>> mode_runs() {
  return {
      {"spectral", "--graph", "cycle:4", "--lambda", "0.05"},
      {"classify", "--graph", "cycle:4", "--lambda", "0.001"},
      {"classify", "--graph", "cycle:4", "--lambda", "0.01,0.02,0.03,0.04"},
      {"simulate", "--graph", "cycle:4", "--lambda", "0.08", "--slots", "200", "--trace"},
      {"fluid", "--graph", "cycle:4", "--lambda", "0.1", "--horizon", "5"},
      {"fluid", "--graph", "cycle:4", "--lambda", "0.2", "--horizon", "5"},
      {"stable-points", "--graph", "cycle:4", "--lambda", "0.001", "--starts", "8"},
      {"sweep", "--graph", "cycle:4", "--grid", "0.05,0.2", "--slots", "2000", "--reps", "2"},
      {"convergence", "--graph", "cycle:4", "--lambda", "0.1", "--scales", "100,1000", "--reps", "3", "--horizon", "1"},
      {"boundary", "--graph", "cycle:4", "--lambda", "0.1", "--horizon", "2"},
      {"rates", "--graph", "cycle:4", "--lambda", "0.05", "--checkpoints", "10,100", "--reps", "100",
       "--reference-slots", "20000"},
  };
}

}  // namespace

TEST_CASE("parse: subcommand and flags") {
  std::ostringstream out;
  const char* argv[] = {"aloha", "spectral", "--graph", "cycle:4", "--lambda", "0.05"};
  const auto c = parse_config(6, argv, out);
  REQUIRE(c.has_value());
  CHECK(c->mode == "spectral");
  CHECK(c->graph == "cycle:4");
  CHECK(c->lambda == std::vector<double>{0.05});
  const char* multi[] = {"aloha", "classify", "--graph", "cycle:4", "--lambda", "0.1,0.2,0.1,0.2"};
  CHECK(parse_config(6, multi, out)->lambda.size() == 4);
  const char* help[] = {"aloha", "--help"};
  CHECK_FALSE(parse_config(2, help, out).has_value());
}

TEST_CASE("parse: flags override the config file") {
  const fs::path dir = scratch("precedence");
  const fs::path file = dir / "run.json";
  std::ofstream(file) << R"({"mode": "classify", "graph": "cycle:4", "lambda": [0.05], "seed": 5})";
  std::ostringstream out;
  const std::string f = file.string();
  const char* from_file[] = {"aloha", "--config", f.c_str()};
  CHECK(parse_config(3, from_file, out)->seed == 5);
  const char* overridden[] = {"aloha", "--config", f.c_str(), "--seed", "9"};
  CHECK(parse_config(5, overridden, out)->seed == 9);
  const char* sub[] = {"aloha", "classify", "--config", f.c_str(), "--lambda", "0.02"};
  const auto c = parse_config(6, sub, out);
  CHECK(c->lambda == std::vector<double>{0.02});
  CHECK(c->seed == 5);
}

TEST_CASE("config errors carry field paths") {
  const auto path_of = [](const json& j) {
    try {
      validate(config_from_json(j));
    } catch (const ConfigError& e) {
      return e.path();
    }
    return std::string("<none>");
  };
  CHECK(path_of({{"mode", "spectral"}, {"graph", "cycle:4"}, {"bogus", 1}}) == "$.bogus");
  CHECK(path_of({{"mode", "spectral"}, {"graph", "cycle:4"}, {"seed", "x"}}) == "$.seed");
  CHECK(path_of({{"mode", "classify"}, {"graph", "cycle:4"}, {"lambda", {0.1, 0.0, 0.1, 0.1}}}) == "$.lambda[1]");
  CHECK(path_of({{"mode", "classify"}, {"lambda", {0.1}}}) == "$.graph");
  CHECK(path_of({{"mode", "teleport"}, {"graph", "cycle:4"}}) == "$.mode");
  CHECK(path_of({{"mode", "stable-points"}, {"graph", "cycle:5"}, {"lambda", {0.01}}, {"ansatz", "on"}}) == "$.ansatz");
  CHECK(path_of({{"mode", "classify"}, {"graph", "cycle:4"}, {"lambda", {0.1}}}) == "<none>");
}

TEST_CASE("exit codes") {
  const Result zero_lambda = invoke({"classify", "--graph", "cycle:4", "--lambda", "0"});
  CHECK(zero_lambda.code == kExitConfig);
  CHECK(zero_lambda.err.find("lambda_i > 0 required") != std::string::npos);

  const Result missing = invoke({"spectral", "--lambda", "0.05"});
  CHECK(missing.code == kExitConfig);
  CHECK(missing.err.find("missing graph") != std::string::npos);

  const fs::path dir = scratch("mismatch");
  const Result mismatch = invoke({"simulate", "--graph", "complete:1", "--lambda", "0.5", "--slots", "10",
                                  "--arrivals", "zero", "--out", dir.string()});
  CHECK(mismatch.code == kExitConfig);
  CHECK(mismatch.err.find("lambda/model mismatch") != std::string::npos);

  CHECK(invoke({"spectral", "--graph", "nonexistent-file.edges", "--lambda", "0.05"}).code == kExitConfig);
  CHECK(invoke({"spectral", "--graph", "cycle:4", "--no-such-flag"}).code == kExitConfig);
}

TEST_CASE("classify summary and stable-points artifact") {
  const fs::path dir = scratch("classify");
  const Result r = invoke({"classify", "--graph", "cycle:4", "--lambda", "0.001", "--out", dir.string()});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("fluid_stable=true") != std::string::npos);
  CHECK(r.out.find("diagonal=unstable") != std::string::npos);
  CHECK(r.out.find("0.122626480") != std::string::npos);
  CHECK(r.out.find("0.068125822") != std::string::npos);

  const fs::path sp = scratch("stable");
  REQUIRE(invoke({"stable-points", "--graph", "cycle:4", "--lambda", "0.001", "--out", sp.string()}).code == kExitOk);
  const json doc = load(sp / "stable-points.json");
  CHECK(doc["result"]["count"] == 3);
  CHECK(doc["result"]["points"].size() == 3);
}

TEST_CASE("identical configuration and seed give byte-identical artifacts") {
  for (const auto& args : mode_runs()) {
    const fs::path a = scratch("same_a");
    const fs::path b = scratch("same_b");
    auto run_a = args;
    run_a.insert(run_a.end(), {"--seed", "17", "--out", a.string()});
    auto run_b = args;
    run_b.insert(run_b.end(), {"--seed", "17", "--out", b.string()});
    REQUIRE(invoke(run_a).code == kExitOk);
    REQUIRE(invoke(run_b).code == kExitOk);
    const std::string name = args.front() + ".json";
    CAPTURE(name);
    CHECK(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("artifacts validate against the published schemas") {
  for (const auto& args : mode_runs()) {
    const fs::path dir = scratch("schema");
    auto run = args;
    run.insert(run.end(), {"--out", dir.string()});
    REQUIRE(invoke(run).code == kExitOk);
    const std::string mode = args.front();
    CAPTURE(mode);
    const json doc = load(dir / (mode + ".json"));
    const auto errors = schema_errors(doc, mode + ".schema.json");
    CHECK_MESSAGE(errors.empty(), (errors.empty() ? "" : errors.front()));
    json tampered = doc;
    tampered["result"]["unexpected"] = 1;
    tampered["partial"] = "no";
    CHECK(schema_errors(tampered, mode + ".schema.json").size() == 2);
    CHECK(schema_errors(load(dir / "metadata.json"), "metadata.schema.json").empty());
    // The echoed configuration is itself a valid input configuration.
    CHECK(schema_errors(doc["config"], "config.schema.json").empty());
    CHECK_NOTHROW(validate(config_from_json(doc["config"])));
    if (mode == "simulate") {
      std::ifstream lines(dir / "trace.jsonl");
      std::string line;
      int n = 0;
      while (std::getline(lines, line)) {
        ++n;
        CHECK(schema_errors(json::parse(line), "trace-line.schema.json").empty());
      }
      CHECK(n == 200);
    }
  }
}

TEST_CASE("CSV artifacts carry the documented headers") {
  const json columns = load(fs::path(ALOHA_SOURCE_DIR) / "schemas" / "csv-columns.json")["columns"];
  for (const auto& args : mode_runs()) {
    const fs::path dir = scratch("csv");
    auto run = args;
    run.insert(run.end(), {"--format", "csv", "--out", dir.string()});
    REQUIRE(invoke(run).code == kExitOk);
    const std::string mode = args.front();
    CAPTURE(mode);
    std::ifstream in(dir / (mode + ".csv"));
    std::string header;
    std::getline(in, header);
    std::string expected;
    for (const auto& c : columns[mode]) {
      const std::string name = c.get<std::string>();
      if (name == "z1..zK") {
        for (int i = 1; i <= 4; ++i) expected += "z" + std::to_string(i) + ",";
      } else {
        expected += name + ",";
      }
    }
    expected.pop_back();
    CHECK(header == expected);
  }
}

TEST_CASE("installed binary: exit statuses") {
  const std::string bin = ALOHA_CLI;
  const fs::path dir = scratch("binary");
  const auto status = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status("--help") == 0);
  CHECK(status("spectral --graph cycle:4 --lambda 0.05 --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "spectral.json"));
  CHECK(status("classify --graph cycle:4 --lambda 0") == 2);
  CHECK(status("spectral --lambda 0.05") == 2);
}
