#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cogload/error.hpp"
#include "cogload/explain.hpp"

namespace cogload {

namespace {

using ojson = nlohmann::ordered_json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << text;
  if (!out) throw Error(Errc::Io, "write failed for " + path);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// white (0) -> red (1)
std::string ramp_color(double r) {
  const double c = std::clamp(r, 0.0, 1.0);
  const int gb = static_cast<int>(std::lround(255.0 * (1.0 - c)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#ff%02x%02x", gb, gb);
  return buf;
}

}  // namespace

std::vector<TopoPoint> topo_points(const RelevanceMap& map, const Montage& montage) {
  if (map.electrodes.size() != map.relevance.size()) {
    throw Error(Errc::DimensionMismatch, "relevance map has mismatched electrode/value counts");
  }
  std::vector<TopoPoint> pts;
  for (std::size_t i = 0; i < map.electrodes.size(); ++i) {
    const auto idx = montage.find(map.electrodes[i]);
    if (!idx) {
      throw Error(Errc::Consistency, "electrode " + map.electrodes[i] + " is not in montage " + montage.name());
    }
    pts.push_back({map.electrodes[i], montage[*idx].pos, map.relevance[i]});
  }
  return pts;
}

void write_relevance_json(const RelevanceMap& map, const std::vector<TopoPoint>& points,
                          const std::string& path) {
  ojson doc;
  doc["group"] = map.group;
  doc["trial_count"] = map.trial_count;
  ojson list = ojson::array();
  for (const auto& p : points) {
    list.push_back({{"electrode", p.electrode}, {"x", p.pos.x}, {"y", p.pos.y}, {"relevance", p.relevance}});
  }
  doc["electrodes"] = std::move(list);
  write_text(path, doc.dump(2) + "\n");
}

RelevanceMap read_relevance_json(const std::string& path, std::vector<TopoPoint>* points) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open relevance file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error(path, e.byte, e.what());
  }
  RelevanceMap m;
  try {
    m.group = doc.value("group", std::string("global"));
    m.trial_count = doc.value("trial_count", std::size_t{0});
    for (const auto& e : doc.at("electrodes")) {
      TopoPoint p{e.at("electrode").get<std::string>(), {}, e.at("relevance").get<double>()};
      if (e.contains("x") || e.contains("y")) {
        p.pos = {e.at("x").get<double>(), e.at("y").get<double>()};
      } else if (auto pos = standard_position(p.electrode)) {
        p.pos = *pos;
      } else {
        throw format_error(path, 0, "no position for electrode " + p.electrode);
      }
      if (!std::isfinite(p.relevance) || !std::isfinite(p.pos.x) || !std::isfinite(p.pos.y)) {
        throw format_error(path, 0, "non-finite value for electrode " + p.electrode);
      }
      m.electrodes.push_back(p.electrode);
      m.relevance.push_back(p.relevance);
      if (points != nullptr) points->push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path, 0, e.what());
  }
  return m;
}

void write_relevance_csv(const std::vector<RelevanceMap>& maps, const std::string& path) {
  std::ostringstream out;
  out << "group,electrode,relevance\n";
  for (const auto& m : maps)
    for (std::size_t i = 0; i < m.electrodes.size(); ++i)
      out << m.group << ',' << m.electrodes[i] << ',' << format_double(m.relevance[i]) << '\n';
  write_text(path, out.str());
}

std::string topomap_svg(const std::vector<TopoPoint>& points, const std::string& title) {
  // scalp coordinates (y up) map to SVG user units (y down), 100 units per radius
  auto sx = [](double x) { return fixed(150.0 + 100.0 * x, 2); };
  auto sy = [](double y) { return fixed(150.0 - 100.0 * y, 2); };
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"300\" height=\"320\" viewBox=\"0 0 300 320\">\n"
    << "  <title>" << xml_escape(title) << "</title>\n"
    << "  <polygon class=\"nose\" points=\"" << sx(-0.1) << ',' << sy(0.995) << ' ' << sx(0.0) << ','
    << sy(1.12) << ' ' << sx(0.1) << ',' << sy(0.995) << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n"
    << "  <circle class=\"head\" cx=\"150.00\" cy=\"150.00\" r=\"100.00\" fill=\"none\" stroke=\"black\" "
       "stroke-width=\"1.5\"/>\n";
  for (const auto& p : points) {
    s << "  <circle class=\"electrode\" data-name=\"" << xml_escape(p.electrode) << "\" data-relevance=\""
      << fixed(p.relevance, 6) << "\" cx=\"" << sx(p.pos.x) << "\" cy=\"" << sy(p.pos.y)
      << "\" r=\"6.00\" fill=\"" << ramp_color(p.relevance) << "\" stroke=\"#444444\" stroke-width=\"0.5\"/>\n";
    s << "  <text x=\"" << sx(p.pos.x) << "\" y=\"" << fixed(150.0 - 100.0 * p.pos.y + 12.0, 2)
      << "\" font-size=\"6\" text-anchor=\"middle\" font-family=\"sans-serif\">" << xml_escape(p.electrode)
      << "</text>\n";
  }
  s << "  <text x=\"150\" y=\"310\" font-size=\"10\" text-anchor=\"middle\" font-family=\"sans-serif\">"
    << xml_escape(title) << "</text>\n"
    << "</svg>\n";
  return s.str();
}

void render_topomap(const RelevanceMap& map, const Montage& montage, const std::string& out_base) {
  const auto pts = topo_points(map, montage);
  write_relevance_json(map, pts, out_base + ".json");
  write_text(out_base + ".svg", topomap_svg(pts, "relevance: " + map.group));
}

}  // namespace cogload
