#include "dynvio/scenario_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace dynvio {

using nlohmann::json;

namespace {

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 to_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ScenarioError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_vec_if(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) out = to_vec(j.at(key));
}

}  // namespace

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["duration"] = s.duration;
  j["imu_rate"] = s.imu_rate;
  j["cam_rate"] = s.cam_rate;
  j["seed"] = s.seed;
  j["pixel_sigma"] = s.pixel_sigma;
  j["max_range"] = s.max_range;

  json traj;
  traj["loop_period"] = s.loop_period;
  traj["waypoints"] = json::array();
  for (const auto& w : s.waypoints) traj["waypoints"].push_back({{"t", w.t}, {"p", vec(w.p)}, {"yaw", w.yaw}});
  traj["wobble"] = {{"roll_amp", s.wobble.roll_amp},
                    {"roll_freq", s.wobble.roll_freq},
                    {"pitch_amp", s.wobble.pitch_amp},
                    {"pitch_freq", s.wobble.pitch_freq}};
  j["trajectory"] = traj;

  j["imu"] = {{"acc_noise", s.imu.acc_noise}, {"gyr_noise", s.imu.gyr_noise}, {"acc_walk", s.imu.acc_walk},
              {"gyr_walk", s.imu.gyr_walk},   {"b_a0", vec(s.imu.b_a0)},       {"b_w0", vec(s.imu.b_w0)}};

  json R = json::array();
  for (int r = 0; r < 3; ++r) R.push_back(vec(s.camera.T_bc.R.row(r).transpose()));
  j["camera"] = {{"fx", s.camera.fx},         {"fy", s.camera.fy},       {"cx", s.camera.cx},
                 {"cy", s.camera.cy},         {"width", s.camera.width}, {"height", s.camera.height},
                 {"t_bc", vec(s.camera.T_bc.t)}, {"R_bc", R}};

  j["clusters"] = json::array();
  for (const auto& c : s.clusters) {
    json cj;
    cj["label"] = c.label;
    cj["motion"] = {{"kind", to_string(c.motion.kind)}, {"velocity", vec(c.motion.velocity)}, {"t_move", c.motion.t_move}};
    if (c.count > 0) cj["box"] = {{"center", vec(c.box_center)}, {"size", vec(c.box_size)}, {"count", c.count}};
    if (!c.points.empty()) {
      cj["points"] = json::array();
      for (const auto& p : c.points) cj["points"].push_back(vec(p));
    }
    cj["wrap_length"] = c.wrap_length;
    j["clusters"].push_back(cj);
  }
  return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ScenarioError("scenario file must hold a JSON object");
  try {
    Scenario s;
    if (j.contains("preset")) s = preset(j.at("preset").get<std::string>());
    read_if(j, "name", s.name);
    read_if(j, "duration", s.duration);
    read_if(j, "imu_rate", s.imu_rate);
    read_if(j, "cam_rate", s.cam_rate);
    read_if(j, "seed", s.seed);
    read_if(j, "pixel_sigma", s.pixel_sigma);
    read_if(j, "max_range", s.max_range);

    if (j.contains("trajectory")) {
      const json& t = j.at("trajectory");
      read_if(t, "loop_period", s.loop_period);
      if (t.contains("waypoints")) {
        s.waypoints.clear();
        for (const auto& w : t.at("waypoints")) {
          Waypoint p;
          p.t = w.at("t").get<double>();
          p.p = to_vec(w.at("p"));
          read_if(w, "yaw", p.yaw);
          s.waypoints.push_back(p);
        }
      }
      if (t.contains("wobble")) {
        const json& w = t.at("wobble");
        read_if(w, "roll_amp", s.wobble.roll_amp);
        read_if(w, "roll_freq", s.wobble.roll_freq);
        read_if(w, "pitch_amp", s.wobble.pitch_amp);
        read_if(w, "pitch_freq", s.wobble.pitch_freq);
      }
    }
    if (j.contains("imu")) {
      const json& m = j.at("imu");
      read_if(m, "acc_noise", s.imu.acc_noise);
      read_if(m, "gyr_noise", s.imu.gyr_noise);
      read_if(m, "acc_walk", s.imu.acc_walk);
      read_if(m, "gyr_walk", s.imu.gyr_walk);
      read_vec_if(m, "b_a0", s.imu.b_a0);
      read_vec_if(m, "b_w0", s.imu.b_w0);
    }
    if (j.contains("camera")) {
      const json& c = j.at("camera");
      read_if(c, "fx", s.camera.fx);
      read_if(c, "fy", s.camera.fy);
      read_if(c, "cx", s.camera.cx);
      read_if(c, "cy", s.camera.cy);
      read_if(c, "width", s.camera.width);
      read_if(c, "height", s.camera.height);
      read_vec_if(c, "t_bc", s.camera.T_bc.t);
      if (c.contains("R_bc")) {
        const json& R = c.at("R_bc");
        if (!R.is_array() || R.size() != 3) throw ScenarioError("R_bc must be a 3x3 array");
        for (int r = 0; r < 3; ++r) s.camera.T_bc.R.row(r) = to_vec(R[r]).transpose();
      }
    }
    if (j.contains("clusters")) {
      s.clusters.clear();
      for (const auto& cj : j.at("clusters")) {
        ClusterSpec c;
        read_if(cj, "label", c.label);
        if (cj.contains("motion")) {
          const json& m = cj.at("motion");
          if (m.contains("kind")) c.motion.kind = parse_motion_kind(m.at("kind").get<std::string>());
          read_vec_if(m, "velocity", c.motion.velocity);
          read_if(m, "t_move", c.motion.t_move);
        }
        if (cj.contains("box")) {
          const json& b = cj.at("box");
          c.box_center = to_vec(b.at("center"));
          c.box_size = to_vec(b.at("size"));
          c.count = b.at("count").get<int>();
        }
        if (cj.contains("points"))
          for (const auto& p : cj.at("points")) c.points.push_back(to_vec(p));
        read_if(cj, "wrap_length", c.wrap_length);
        s.clusters.push_back(std::move(c));
      }
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("malformed scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << scenario_to_json(s);
}

Scenario resolve_scenario(const std::string& ref) {
  for (const auto& name : preset_names())
    if (name == ref) return preset(ref);
  if (std::filesystem::exists(ref)) return load_scenario(ref);
  throw ScenarioError("'" + ref + "' is neither a preset (" + [] {
    std::string all;
    for (const auto& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
    return all;
  }() + ") nor a scenario file");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_states_csv(const std::filesystem::path& path, const std::vector<BodyState>& states) {
  auto out = open_out(path);
  out << "stamp,px,py,pz,qw,qx,qy,qz,vx,vy,vz,bax,bay,baz,bwx,bwy,bwz\n";
  for (const auto& x : states) {
    out << fmt(x.stamp);
    for (double v : {x.p_wb.x(), x.p_wb.y(), x.p_wb.z(), x.q_wb.w(), x.q_wb.x(), x.q_wb.y(), x.q_wb.z(), x.v_wb.x(),
                     x.v_wb.y(), x.v_wb.z(), x.b_a.x(), x.b_a.y(), x.b_a.z(), x.b_w.x(), x.b_w.y(), x.b_w.z()})
      out << ',' << fmt(v);
    out << '\n';
  }
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw IoError("missing CSV column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV file " + path.string());
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
      }
    }
    if (row.size() != t.header.size())
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<BodyState> read_states_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const int c0 = t.column("stamp");
  if (t.header.size() != 17) throw IoError(path.string() + ": expected 17 state columns");
  std::vector<BodyState> out;
  for (const auto& r : t.rows) {
    BodyState x;
    x.stamp = r[c0];
    x.p_wb = {r[1], r[2], r[3]};
    x.q_wb = Quat(r[4], r[5], r[6], r[7]).normalized();
    x.v_wb = {r[8], r[9], r[10]};
    x.b_a = {r[11], r[12], r[13]};
    x.b_w = {r[14], r[15], r[16]};
    out.push_back(x);
  }
  return out;
}

void write_bundle(const SimBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "imu.csv");
    out << "stamp,ax,ay,az,wx,wy,wz\n";
    for (const auto& s : b.imu)
      out << fmt(s.stamp) << ',' << fmt(s.a_m.x()) << ',' << fmt(s.a_m.y()) << ',' << fmt(s.a_m.z()) << ','
          << fmt(s.w_m.x()) << ',' << fmt(s.w_m.y()) << ',' << fmt(s.w_m.z()) << '\n';
  }
  {
    auto out = open_out(dir / "frames.csv");
    out << "stamp,feature_id,u,v\n";
    for (const auto& f : b.frames)
      for (const auto& [id, uv] : f.observations)
        out << fmt(f.stamp) << ',' << id << ',' << fmt(uv.x()) << ',' << fmt(uv.y()) << '\n';
  }
  write_states_csv(dir / "gt.csv", b.ground_truth);
}

SimBundle read_bundle(const std::filesystem::path& dir) {
  SimBundle b;
  const CsvTable imu = read_csv(dir / "imu.csv");
  for (const auto& r : imu.rows) b.imu.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  b.ground_truth = read_states_csv(dir / "gt.csv");
  std::map<double, size_t> by_stamp;
  for (const auto& x : b.ground_truth) {
    by_stamp.emplace(x.stamp, b.frames.size());
    b.frames.push_back({x.stamp, {}});
  }
  const CsvTable frames = read_csv(dir / "frames.csv");
  for (const auto& r : frames.rows) {
    const auto it = by_stamp.find(r[0]);
    if (it == by_stamp.end()) throw IoError("frames.csv stamp without ground-truth row");
    b.frames[it->second].observations.emplace_back(static_cast<long>(r[1]), Vec2(r[2], r[3]));
  }
  return b;
}

}  // namespace dynvio
