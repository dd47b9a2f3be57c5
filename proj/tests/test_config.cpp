#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "dfosc/config.hpp"
#include "dfosc/csv.hpp"

using namespace dfosc;

namespace {

const char* kExplicit = R"(# explicit loop
name = "tank"

[loop]
sign = 1

[linear]
num = [0, 1e-3]
den = [1, 0, 2.5e-7]

[nonlinearity]
kind = "tanh_relaxation"
k1 = 2
k2 = 6.25
k3 = 0.4

[predict]
omega_range = [1, 1e6]
probe = ["nl_in", "linear_out"]

[simulate]
model = "harmonic_relaxation"
dt = 1e-6
t_max = 0.05
probe = ["v_o", "v_o"]
)";

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST(ParseSpec, PresetExpandsToPublishedParameters) {
  const auto s = parse_spec("preset = \"relaxation_two_tau\"\n");
  ASSERT_TRUE(s.preset.has_value());
  EXPECT_EQ(*s.preset, Preset::relaxation_two_tau);
  EXPECT_EQ(s.loop.sign, +1);
  EXPECT_EQ(s.loop.linear, blocks::relaxation(2.5e-4, 1e-3));
  EXPECT_EQ(s.loop.nl.kind(), NlKind::tanh_relaxation);
  EXPECT_EQ(s.loop.nl.param("k1"), 2.0);
  EXPECT_EQ(s.loop.nl.param("k2"), 6.25);
  EXPECT_EQ(s.loop.nl.param("k3"), 0.4);
  ASSERT_TRUE(s.simulate.has_value());
  EXPECT_EQ(s.simulate->params.at("tau_f"), 2.5e-4);
  EXPECT_EQ(s.simulate->params.at("tau_s"), 1e-3);
}

TEST(ParseSpec, EveryPresetResolves) {
  for (const auto& [p, name] : kPresetNames) {
    const auto s = parse_spec("preset = \"" + std::string(name) + "\"");
    EXPECT_EQ(s, preset_spec(p)) << name;
  }
}

TEST(ParseSpec, MalformedListReportsLocation) {
  const std::string text = "[linear]\nnum = [0, 1e-3]\nden = [1, 1e-3, ?]\n";
  try {
    parse_spec(text);
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.column(), static_cast<int>(std::string("den = [1, 1e-3, ?]").find('?')) + 1);
  }
}

TEST(ParseSpec, LexicalErrors) {
  EXPECT_THROW(parse_spec("name = \"unterminated\n"), SyntaxError);
  EXPECT_THROW(parse_spec("[loop\nsign = 1\n"), SyntaxError);
  EXPECT_THROW(parse_spec("just words\n"), SyntaxError);
  EXPECT_THROW(parse_spec("x = [1, \"a\"]\n"), SyntaxError);
}

TEST(ParseSpec, UnknownKeysAreNamed) {
  try {
    parse_spec("preset = \"ring_relay\"\n[predict]\ngrid = 5\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("grid"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(parse_spec("preset = \"ring_relay\"\ncolour = \"red\"\n"), ConfigError);
  EXPECT_THROW(parse_spec("preset = \"ring_relay\"\n[extras]\n"), ConfigError);
  EXPECT_THROW(parse_spec("preset = \"ring_relay\"\n[simulate]\nwidth = 2\n"), ConfigError);
}

TEST(ParseSpec, SemanticErrors) {
  // Preset plus an explicit block.
  EXPECT_THROW(parse_spec("preset = \"ring_relay\"\n[linear]\nnum = [1]\nden = [1, 1]\n"), ConfigError);
  // Explicit spec missing the loop sign.
  std::string no_sign = kExplicit;
  no_sign.replace(no_sign.find("sign = 1"), 8, "");
  EXPECT_THROW(parse_spec(no_sign), ConfigError);
  std::string bad_sign = kExplicit;
  bad_sign.replace(bad_sign.find("sign = 1"), 8, "sign = 2");
  EXPECT_THROW(parse_spec(bad_sign), ConfigError);
  EXPECT_THROW(parse_spec("preset = \"nothing\"\n"), ConfigError);
  EXPECT_THROW(parse_spec("preset = \"ring_relay\"\n[predict]\nsamples = 1000\n"), ConfigError);
  EXPECT_THROW(parse_spec("preset = \"ring_relay\"\n[predict]\nprobe = [\"nowhere\"]\n"), ConfigError);
  EXPECT_THROW(parse_spec("preset = \"ring_relay\"\n[predict]\nprobe = [\"v1\", \"v2\"]\n"), ConfigError);
  try {
    std::string bad = kExplicit;
    bad.replace(bad.find("k3 = 0.4"), 8, "k3 = -1");
    parse_spec(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "nonlinearity.k3");
  }
}

TEST(ParseSpec, ExplicitSpecFields) {
  const auto s = parse_spec(kExplicit);
  EXPECT_EQ(s.name, "tank");
  EXPECT_FALSE(s.preset.has_value());
  EXPECT_EQ(s.loop.linear, blocks::harmonic_relaxation(2.5e-4, 1e-3));
  EXPECT_EQ(s.solve.omega_min, 1.0);
  EXPECT_EQ(s.solve.omega_max, 1e6);
  EXPECT_EQ(s.probes, (std::vector<std::string>{"nl_in", "linear_out"}));
  ASSERT_TRUE(s.simulate.has_value());
  EXPECT_EQ(s.simulate->model, Preset::harmonic_relaxation);
  EXPECT_EQ(s.simulate->integrate.t_max, 0.05);
}

TEST(ParseSpec, PresetOverrides) {
  const auto s = parse_spec("preset = \"ring_tanh\"\n[simulate]\nk = 4\nmethod = \"rk45\"\n");
  EXPECT_EQ(s.simulate->params.at("k"), 4.0);
  EXPECT_EQ(s.simulate->integrate.method, Method::rk45);
  EXPECT_EQ(s.loop, preset_spec(Preset::ring_tanh).loop);
}

TEST(ParseSpec, StringEscapes) {
  const auto s = parse_spec("name = \"a \\\"quoted\\\" \\\\ name\"\npreset = \"ring_relay\"\n");
  EXPECT_EQ(s.name, "a \"quoted\" \\ name");
}

TEST(Serialize, RoundTripIsFixpoint) {
  std::vector<std::string> texts{kExplicit};
  for (const auto& [p, name] : kPresetNames) texts.push_back("preset = \"" + std::string(name) + "\"\n");
  texts.push_back("preset = \"ring_tanh\"\n[simulate]\nk = 4\nx0 = [0.1, 0.2, 0.3]\n");
  texts.push_back(R"(name = "table"
[loop]
sign = -1
bias_mode = "dc_balance"
[linear]
num = [1]
den = [1, 3, 3, 1]
rho = 0.25
delay_convention = "fixed_phasor"
[nonlinearity]
kind = "tabulated"
x = [-3, -1, 0, 1, 3]
y = [-1, -0.9, 0.1, 0.9, 1]
scale = 2
)");
  for (const auto& t : texts) {
    const auto a = parse_spec(t);
    const auto once = serialize_spec(a);
    const auto b = parse_spec(once);
    EXPECT_EQ(a, b) << t;
    EXPECT_EQ(serialize_spec(b), once) << t;
  }
}

TEST(Csv, NumberFormatting) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1732.0508075688772), "1732.0508075688772");
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(format_number(-0.0), "-0");
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
  std::mt19937_64 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::ldexp(std::uniform_real_distribution<double>(-1, 1)(rng),
                                std::uniform_int_distribution<int>(-300, 300)(rng));
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
}

TEST(Csv, QuotingAndShape) {
  EXPECT_EQ(csv_field(std::string("plain")), "plain");
  EXPECT_EQ(csv_field(std::string("a,b")), "\"a,b\"");
  EXPECT_EQ(csv_field(std::string("say \"hi\"")), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field(7LL), "7");
  const std::vector<Row> rows{{std::string("A"), std::string("a0"), std::string("ReN"), std::string("ImN")},
                              {1.0, 0.0, 2.5, -0.5}};
  EXPECT_EQ(to_csv(rows), "A,a0,ReN,ImN\n1,0,2.5,-0.5\n");
  EXPECT_THROW(to_csv({}), DomainError);
  EXPECT_THROW(to_csv({{std::string("a"), std::string("b")}, {1.0}}), DomainError);
}

TEST(Csv, AtomicWrite) {
  const auto dir = std::filesystem::temp_directory_path() / "dfosc_csv_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "metrics.csv";
  emit_csv({{std::string("node"), std::string("amplitude"), std::string("offset"), std::string("period"),
             std::string("thd")},
            {std::string("v_o"), 1.5, 0.0, 0.0037, 0.07}},
           path);
  EXPECT_EQ(read_file(path), "node,amplitude,offset,period,thd\nv_o,1.5,0,0.0037,0.07\n");
  EXPECT_FALSE(std::filesystem::exists(dir / "metrics.csv.tmp"));
  EXPECT_THROW(emit_csv({{std::string("x")}}, dir / "missing" / "x.csv"), ConfigError);
  std::filesystem::remove_all(dir);
}
