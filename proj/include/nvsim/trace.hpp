#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nvsim {

// Signal-vs-abscissa series produced by every simulation protocol.
struct Trace {
  std::string protocol;
  std::string abscissa_name;  // column header, e.g. "tau_us"
  std::string signal_name = "signal";
  std::vector<double> abscissa;
  std::vector<double> signal;
  std::map<std::string, double> parameters;  // resolved inputs, for the sidecar
  std::uint64_t seed = 0;

  std::size_t size() const { return abscissa.size(); }
  // Throws ContractViolation on length mismatch or non-finite samples.
  void validate() const;
};

}  // namespace nvsim
