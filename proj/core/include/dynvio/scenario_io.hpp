#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynvio/scenario.hpp"

namespace dynvio {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scenario files are JSON objects. A "preset" key starts from that preset
/// and the remaining keys override it.
Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// A preset name or a path to a scenario file.
Scenario resolve_scenario(const std::string& ref);

/// Fixed-precision number formatting shared by every CSV writer.
std::string fmt(double v);

/// stamp,px,py,pz,qw,qx,qy,qz,vx,vy,vz,bax,bay,baz,bwx,bwy,bwz
void write_states_csv(const std::filesystem::path& path, const std::vector<BodyState>& states);
std::vector<BodyState> read_states_csv(const std::filesystem::path& path);

/// imu.csv, frames.csv, gt.csv
void write_bundle(const SimBundle& b, const std::filesystem::path& dir);
SimBundle read_bundle(const std::filesystem::path& dir);

/// Parsed CSV: header plus numeric rows. Throws IoError.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  int column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace dynvio
