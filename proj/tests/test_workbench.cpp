#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "nvsim/errors.hpp"
#include "nvsim/workbench.hpp"

using namespace nvsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("nvwb_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(NVWB_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string expect_schema_error(const std::string& text, const CsvSchema& schema) {
  try {
    parse_csv(text, schema);
  } catch (const SchemaError& e) {
    return e.what();
  }
  FAIL("expected SchemaError");
  return {};
}

std::string expect_config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  FAIL("expected a config error");
  return {};
}

}  // namespace

TEST_CASE("PCG32 is deterministic per seed") {
  Pcg32 a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u32();
    CHECK(x == b.next_u32());
    differs = differs || x != c.next_u32();
  }
  CHECK(differs);
  Pcg32 u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("Gaussian noise has the requested spread") {
  std::vector<double> v(20000, 0.0);
  Pcg32 rng(5);
  add_gaussian_noise(v, 0.5, rng);
  double m = 0.0, s = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) s += (x - m) * (x - m);
  s = std::sqrt(s / static_cast<double>(v.size() - 1));
  CHECK(std::abs(m) < 0.02);
  CHECK(std::abs(s - 0.5) < 0.01);
}

TEST_CASE("CSV round trip preserves values bit for bit") {
  Table t;
  t.comments = {"units: tau_us [us], signal [1]"};
  t.columns = {"tau_us", "signal"};
  t.rows = {{0.0, 1.0}, {0.1, 0.1 + 0.2}, {1e-300, -3.14159265358979}};
  const auto text = to_csv(t);
  CHECK(text.rfind("# ", 0) == 0);
  const auto back = parse_csv(text, csv_schema("ramsey"));
  CHECK(back.columns == t.columns);
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(back.rows[i] == t.rows[i]);
  CHECK(format_number(0.0) == "0");
}

TEST_CASE("CSV schema errors carry line numbers") {
  const auto& s = csv_schema("ramsey");
  CHECK(expect_schema_error("# c\ntau_us\n1\n", s).find("signal") != std::string::npos);
  CHECK(expect_schema_error("tau_us,signal,extra\n1,2,3\n", s).find("extra") != std::string::npos);
  CHECK(expect_schema_error("tau_us,signal\n1,2\n3\n", s).find("line 3") != std::string::npos);
  CHECK(expect_schema_error("# a\n# b\ntau_us,signal\n1,2\n2,abc\n", s).find("line 5") != std::string::npos);
  CHECK(expect_schema_error("tau_us,signal\n1,nan\n", s).find("line 2") != std::string::npos);
  CHECK_THROWS_AS(parse_csv("tau_us,signal\n", s), SchemaError);
  CHECK_THROWS_AS(parse_csv("tau_us,tau_us\n1,2\n", s), SchemaError);
  CHECK_THROWS_AS(csv_schema("nope"), InvalidParameter);
  CHECK(parse_csv("b_gauss,f1_mhz,f2_mhz,sigma_mhz\n500,5,4.8,1e-4\n", csv_schema("field-series")).has_column("sigma_mhz"));
}

TEST_CASE("config parsing and validation") {
  const auto cfg = parse_config(R"({"b_gauss": 484, "q_mhz": -4.9, "seed": 9})");
  CHECK(cfg.b_gauss == 484.0);
  CHECK(cfg.spin.Q == -4.9);
  CHECK(cfg.seed == 9u);
  CHECK(parse_config("{}").spin.D == 2870.0);

  const auto unknown = expect_config_error("{\n  \"b_gauss\": 500,\n  \"bogus\": 1\n}");
  CHECK(unknown.find("bogus") != std::string::npos);
  CHECK(unknown.find("line 3") != std::string::npos);
  CHECK(expect_config_error("{\"b_gauss\": 500,\n}").find("line") != std::string::npos);
  CHECK(expect_config_error(R"({"b_gauss": "x"})").find("b_gauss") != std::string::npos);
  CHECK(expect_config_error(R"({"readout_mode": "magic"})").find("readout_mode") != std::string::npos);
  CHECK(expect_config_error(R"({"contrast_c0": 1.5})").find("readout") != std::string::npos);
  CHECK(expect_config_error(R"({"b_gauss": -3})").find("b_gauss") != std::string::npos);
}

TEST_CASE("config serialization is stable and hashable") {
  const auto a = config_to_json(parse_config(R"({"seed": 3, "b_gauss": 500})"));
  const auto b = config_to_json(parse_config(R"({"b_gauss": 500, "seed": 3})"));
  CHECK(a == b);
  CHECK(fnv1a64(a) == fnv1a64(b));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
  CHECK(parse_config(a).b_gauss == 500.0);
}

TEST_CASE("calc commands") {
  std::ostringstream out, err;
  CalcOptions o;
  o.kind = "calibrate-field";
  o.f_plus_mhz = 4279.9;
  o.f_minus_mhz = 1460.1;
  REQUIRE(cmd_calc(o, out, err) == exit_code::ok);
  auto j = nlohmann::json::parse(out.str());
  CHECK(j["result"]["b_gauss"].get<double>() == doctest::Approx(502.9968).epsilon(1e-6));

  out.str("");
  o.kind = "q-slope";
  REQUIRE(cmd_calc(o, out, err) == exit_code::ok);
  j = nlohmann::json::parse(out.str());
  CHECK(j["result"]["slope_hz_per_k"].get<double>() == doctest::Approx(-35.085035).epsilon(1e-7));

  out.str("");
  o.kind = "sensitivity";
  REQUIRE(cmd_calc(o, out, err) == exit_code::ok);
  CHECK(nlohmann::json::parse(out.str())["result"].contains("delta_omega_rad_per_s"));

  o.kind = "calibrate-field";
  o.f_plus_mhz = 1000.0;
  o.f_minus_mhz = 2000.0;
  CHECK(cmd_calc(o, out, err) == exit_code::validation);
  o.kind = "nonsense";
  CHECK(cmd_calc(o, out, err) == exit_code::validation);
}

TEST_CASE("simulate and fit are byte-identical across runs") {
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  for (const auto& d : {d1, d2}) {
    REQUIRE(run("simulate ramsey --seed 5 --noise-rel 0.01 --out-dir " + d.string()) == 0);
    REQUIRE(run("fit ramsey " + (d / "ramsey.csv").string() + " -o " + (d / "fit.json").string()) == 0);
  }
  for (const auto* f : {"ramsey.csv", "ramsey.json", "fit.json"})
    CHECK(read_file((d1 / f).string()) == read_file((d2 / f).string()));

  const auto fit = nlohmann::ordered_json::parse(read_file((d1 / "fit.json").string()));
  std::vector<std::string> keys;
  const std::vector<std::string> required{"params", "stderr", "covariance", "chi2_reduced", "converged", "provenance"};
  for (const auto& [k, v] : fit.items())
    if (std::find(required.begin(), required.end(), k) != required.end()) keys.push_back(k);
  CHECK(keys == required);
  CHECK(fit["converged"].get<bool>());
  CHECK(fit["provenance"]["input_hash"].get<std::string>().rfind("fnv1a64:", 0) == 0);

  const auto d3 = scratch("det3");
  REQUIRE(run("simulate ramsey --seed 6 --noise-rel 0.01 --out-dir " + d3.string()) == 0);
  CHECK(read_file((d1 / "ramsey.csv").string()) != read_file((d3 / "ramsey.csv").string()));
}

TEST_CASE("generate writes data with a truth sidecar") {
  const auto d = scratch("gen");
  REQUIRE(run("generate field-series --seed 2 --noise-khz 0.1 --out-dir " + d.string()) == 0);
  const auto side = nlohmann::json::parse(read_file((d / "field-series.json").string()));
  CHECK(side.contains("truth"));
  CHECK(side.contains("provenance"));
  const auto t = read_csv((d / "field-series.csv").string(), csv_schema("field-series"));
  CHECK(t.rows.size() == 14);
  CHECK(t.has_column("sigma_mhz"));
  REQUIRE(run("fit field-series " + (d / "field-series.csv").string() + " -o " + (d / "f.json").string()) == 0);
  const auto f = nlohmann::json::parse(read_file((d / "f.json").string()));
  CHECK(std::abs(f["params"]["Q"].get<double>() - (-4.9457)) < 3 * f["stderr"]["Q"].get<double>() + 3e-4);
}

TEST_CASE("exit codes") {
  const auto d = scratch("codes");
  CHECK(run("simulate warp") == exit_code::validation);
  CHECK(run("simulate ramsey --b-gauss -5 --out-dir " + d.string()) == exit_code::validation);
  CHECK(run("simulate ramsey --no-such-flag") == exit_code::validation);
  CHECK(run("fit ramsey " + (d / "missing.csv").string()) == exit_code::io);
  CHECK(run("simulate ramsey --config " + (d / "missing.json").string()) == exit_code::io);
  write_file((d / "bad.csv").string(), "tau_us,wrong\n1,2\n");
  CHECK(run("fit ramsey " + (d / "bad.csv").string()) == exit_code::validation);
  write_file((d / "bad.json").string(), "{\"zeta\": 1}");
  CHECK(run("simulate ramsey --config " + (d / "bad.json").string()) == exit_code::validation);
  CHECK(run("calc calibrate-field --f-plus 4279.9 --f-minus 1460.1") == exit_code::ok);
  CHECK(run("--help") == exit_code::ok);
}

TEST_CASE("shipped data files load") {
  const std::string dir = NVSIM_DATA_DIR;
  const auto cfg = load_config(dir + "/example_config.json");
  CHECK(cfg.readout.polarization[0] == 0.8);
  const auto t = read_csv(dir + "/d_of_t_linear.csv", csv_schema("d-table"));
  const auto T = t.column("t_kelvin"), D = t.column("d_mhz");
  for (std::size_t i = 0; i < T.size(); ++i) CHECK(std::abs(D[i] - (2870.0 - 0.0742 * (T[i] - 297.0))) < 1e-4);

  const auto d = scratch("temp");
  REQUIRE(run("generate temp-series --seed 1 --d-table " + dir + "/d_of_t_linear.csv --out-dir " + d.string()) == 0);
  REQUIRE(run("fit temp-series " + (d / "temp-series.csv").string() + " --d-table " + dir + "/d_of_t_linear.csv -o " +
              (d / "t.json").string()) == 0);
  const auto j = nlohmann::json::parse(read_file((d / "t.json").string()));
  CHECK(std::abs(j["derived"]["slope_hz_per_k"].get<double>() - (-35.085035)) < 0.3);
  CHECK(run("fit temp-series " + (d / "temp-series.csv").string()) == exit_code::validation);
}
