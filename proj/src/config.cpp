#include <cmath>
#include <functional>
#include <limits>

#include "nvsim/errors.hpp"
#include "nvsim/json_io.hpp"
#include "nvsim/workbench.hpp"

namespace nvsim {

namespace {

void dump_into(const ojson& j, int indent, int depth, std::string& out) {
  const std::string pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string pad_close = indent > 0 ? std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  const char* sep = indent > 0 ? ": " : ":";
  switch (j.type()) {
    case ojson::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += std::string(",") + nl;
        first = false;
        out += pad + ojson(it.key()).dump() + sep;
        dump_into(it.value(), indent, depth + 1, out);
      }
      out += nl + pad_close + "}";
      return;
    }
    case ojson::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool scalar = true;
      for (const auto& e : j) scalar = scalar && !e.is_structured();
      out += "[";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += scalar ? ", " : ",";
        if (!scalar) out += nl + pad;
        first = false;
        dump_into(e, indent, depth + 1, out);
      }
      if (!scalar) out += nl + pad_close;
      out += "]";
      return;
    }
    case ojson::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_number(v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

// 1-based line of the first occurrence of "key" in the text, or 0.
std::size_t line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  std::size_t line = 1;
  for (std::size_t i = 0; i < pos; ++i) line += text[i] == '\n';
  return line;
}

struct Field {
  const char* key;
  std::function<void(const ojson&)> set;
  std::function<ojson()> get;
};

double as_number(const ojson& v, const char* key) {
  if (!v.is_number()) throw SchemaError(std::string("expected a number for '") + key + "'");
  return v.get<double>();
}

std::vector<Field> fields(WorkbenchConfig& c) {
  auto num = [](const char* key, double& ref) {
    return Field{key, [&ref, key](const ojson& v) { ref = as_number(v, key); }, [&ref] { return ojson(ref); }};
  };
  auto pop = [&c](const char* key, int idx) {
    return Field{key, [&c, key, idx](const ojson& v) { c.readout.polarization[idx] = as_number(v, key); },
                 [&c, idx] { return ojson(c.readout.polarization[idx]); }};
  };
  std::vector<Field> f = {
      num("d_mhz", c.spin.D),
      num("gamma_e_mhz_per_gauss", c.spin.gamma_e),
      num("q_mhz", c.spin.Q),
      num("gamma_n_mhz_per_gauss", c.spin.gamma_n),
      num("a_par_mhz", c.spin.A_par),
      num("a_perp_mhz", c.spin.A_perp),
      num("b_gauss", c.b_gauss),
      Field{"readout_mode",
            [&c](const ojson& v) {
              if (!v.is_string()) throw SchemaError("expected a string for 'readout_mode'");
              const auto s = v.get<std::string>();
              if (s == "parametric")
                c.readout.mode = ReadoutMode::parametric;
              else if (s == "rate_model")
                c.readout.mode = ReadoutMode::rate_model;
              else
                throw SchemaError("readout_mode must be \"parametric\" or \"rate_model\", got \"" + s + "\"");
            },
            [&c] { return ojson(c.readout.mode == ReadoutMode::parametric ? "parametric" : "rate_model"); }},
      pop("polarization_plus1", 0),
      pop("polarization_0", 1),
      pop("polarization_minus1", 2),
      num("contrast_c0", c.readout.contrast.C0),
      num("contrast_b0_gauss", c.readout.contrast.B0),
      num("contrast_fwhm_gauss", c.readout.contrast.fwhm),
      num("contrast_baseline", c.readout.contrast.baseline),
      num("readout_window_us", c.readout.readout_window_us),
      num("crossover_gauss", c.readout.crossover_gauss),
      num("crossover_width_gauss", c.readout.crossover_width_gauss),
      num("t2_star_us", c.decoherence.T2_star_us),
      Field{"t_rabi_us",
            [&c](const ojson& v) {
              c.decoherence.T_rabi_us = v.is_null() ? std::numeric_limits<double>::infinity() : as_number(v, "t_rabi_us");
            },
            [&c] { return std::isfinite(c.decoherence.T_rabi_us) ? ojson(c.decoherence.T_rabi_us) : ojson(nullptr); }},
      num("pump_rate_per_us", c.rates.pump_rate),
      num("radiative_rate_per_us", c.rates.radiative_rate),
      num("isc_rate_ms0_per_us", c.rates.isc_rate_ms0),
      num("isc_rate_ms1_per_us", c.rates.isc_rate_ms1),
      num("singlet_decay_rate_per_us", c.rates.singlet_decay_rate),
      num("d_es_mhz", c.rates.D_es),
      num("a_par_es_mhz", c.rates.A_par_es),
      num("a_perp_es_mhz", c.rates.A_perp_es),
      num("q_es_mhz", c.rates.Q_es),
      Field{"seed",
            [&c](const ojson& v) {
              if (!v.is_number_unsigned()) throw SchemaError("expected a non-negative integer for 'seed'");
              c.seed = v.get<std::uint64_t>();
            },
            [&c] { return ojson(c.seed); }},
      Field{"output_dir",
            [&c](const ojson& v) {
              if (!v.is_string()) throw SchemaError("expected a string for 'output_dir'");
              c.output_dir = v.get<std::string>();
            },
            [&c] { return ojson(c.output_dir); }},
  };
  return f;
}

}  // namespace

std::string dump_json(const ojson& j, int indent) {
  std::string out;
  dump_into(j, indent, 0, out);
  if (indent > 0) out += "\n";
  return out;
}

void WorkbenchConfig::validate() const {
  auto section = [](const char* name, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      throw InvalidParameter(std::string("config ") + name + ": " + e.what());
    }
  };
  section("spin parameters", [&] { spin.validate(); });
  section("readout", [&] { readout.validate(); });
  section("decoherence", [&] { decoherence.validate(); });
  section("rate model", [&] { rates.validate(); });
  if (!std::isfinite(b_gauss) || b_gauss < 0.0) throw InvalidParameter("config field 'b_gauss' must be >= 0");
  if (output_dir.empty()) throw InvalidParameter("config field 'output_dir' must not be empty");
}

WorkbenchConfig parse_config(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw SchemaError("config line " + std::to_string(line) + ": JSON syntax error");
  }
  if (!doc.is_object()) throw SchemaError("config must be a JSON object");

  WorkbenchConfig cfg;
  auto fs = fields(cfg);
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    const auto line = line_of_key(text, key);
    const std::string where = "config line " + std::to_string(line) + ", field '" + key + "'";
    const Field* field = nullptr;
    for (const auto& f : fs)
      if (key == f.key) field = &f;
    if (!field) throw SchemaError(where + ": unknown key");
    try {
      field->set(it.value());
    } catch (const Error& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  cfg.rates.gamma_e = cfg.spin.gamma_e;
  cfg.rates.gamma_n = cfg.spin.gamma_n;
  cfg.validate();
  return cfg;
}

WorkbenchConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string config_to_json(const WorkbenchConfig& cfg) {
  WorkbenchConfig copy = cfg;
  ojson j = ojson::object();
  for (const auto& f : fields(copy)) j[f.key] = f.get();
  return dump_json(j);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace nvsim
