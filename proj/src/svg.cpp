#include <fstream>
#include <sstream>

#include "drip/harness.hpp"

namespace drip::harness {

// Minimal static-SVG emission for scene, trajectory and scatter figures.

namespace {

struct SvgCanvas {
  std::ostringstream body;
  double min_x, min_y, max_x, max_y;
  double scale;

  SvgCanvas(double x0, double y0, double x1, double y1, double px_per_m = 30.0)
      : min_x(x0), min_y(y0), max_x(x1), max_y(y1), scale(px_per_m) {}

  double W() const { return (max_x - min_x) * scale; }
  double H() const { return (max_y - min_y) * scale; }
  double tx(double x) const { return (x - min_x) * scale; }
  double ty(double y) const { return (max_y - y) * scale; }  // y up

  void polygon(const std::vector<geom::Vec2>& pts, const std::string& fill,
               const std::string& stroke, double opacity = 1.0) {
    body << "<polygon points=\"";
    for (const auto& p : pts) body << tx(p.x) << "," << ty(p.y) << " ";
    body << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\" stroke-width=\"1\" opacity=\""
         << opacity << "\"/>\n";
  }

  void box(const geom::OrientedBox& b, const std::string& fill, const std::string& stroke,
           double opacity = 1.0) {
    const auto c = b.corners();
    polygon({c.begin(), c.end()}, fill, stroke, opacity);
  }

  void circle(double x, double y, double r_px, const std::string& fill, double opacity = 1.0) {
    body << "<circle cx=\"" << tx(x) << "\" cy=\"" << ty(y) << "\" r=\"" << r_px
         << "\" fill=\"" << fill << "\" opacity=\"" << opacity << "\"/>\n";
  }

  void polyline(const std::vector<geom::Vec2>& pts, const std::string& stroke, double width = 1.5) {
    body << "<polyline points=\"";
    for (const auto& p : pts) body << tx(p.x) << "," << ty(p.y) << " ";
    body << "\" fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size = 12) {
    body << "<text x=\"" << tx(x) << "\" y=\"" << ty(y) << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\">" << s << "</text>\n";
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W() << "\" height=\"" << H()
        << "\" viewBox=\"0 0 " << W() << " " << H() << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body.str() << "</svg>\n";
  }
};

void draw_scene(SvgCanvas& canvas, const sim::Scenario& s) {
  canvas.box(s.bounds, "none", "#444444");
  for (const auto& o : s.obstacles) canvas.box(o, "#9aa0a6", "#5f6368", 0.9);
  canvas.box(s.slot.rect, "none", "#188038");
  canvas.circle(s.slot.target.x, s.slot.target.y, 3.0, "#188038");
}

}  // namespace

void save_trajectory_figure(const sim::Scenario& s, const std::vector<geom::Pose>& poses,
                            const sim::VehicleParams& veh, const std::string& path) {
  SvgCanvas canvas(s.bounds.center.x - s.bounds.half_length - 1.0,
                   s.bounds.center.y - s.bounds.half_width - 1.0,
                   s.bounds.center.x + s.bounds.half_length + 1.0,
                   s.bounds.center.y + s.bounds.half_width + 1.0);
  draw_scene(canvas, s);
  const auto fp = veh.footprint();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (i % 3 == 0 || i + 1 == poses.size())
      canvas.box(fp.at(poses[i]), "none", "#1a73e8", 0.5);
  }
  std::vector<geom::Vec2> line;
  for (const auto& p : poses) line.push_back({p.x, p.y});
  canvas.polyline(line, "#d93025", 2.0);
  canvas.save(path);
}

void save_success_vs_time_figure(
    const std::vector<std::pair<std::string, std::pair<double, double>>>& points,
    const std::string& path) {
  double max_ms = 1.0;
  for (const auto& [name, p] : points) max_ms = std::max(max_ms, p.first);
  SvgCanvas canvas(0, 0, max_ms * 1.2, 110.0, 420.0 / (max_ms * 1.2));
  canvas.body << "<line x1=\"0\" y1=\"" << canvas.ty(0) << "\" x2=\"" << canvas.W()
              << "\" y2=\"" << canvas.ty(0) << "\" stroke=\"#444\"/>\n";
  for (const auto& [name, p] : points) {
    canvas.circle(p.first, p.second, 4.0, "#1a73e8");
    canvas.text(p.first, p.second + 3.0, name, 11);
  }
  canvas.text(max_ms * 0.45, 106.0, "success (%) vs inference (ms)");
  canvas.save(path);
}

void save_action_map(const ActionMap& map, const std::vector<ActionOverlay>& overlays,
                     const std::string& path_prefix) {
  // Machine-readable grid.
  {
    std::ofstream out(path_prefix + ".json");
    out << "{\n  \"grid\": " << map.grid << ",\n  \"pose\": [" << map.pose.x << ", "
        << map.pose.y << ", " << map.pose.theta << "],\n  \"cells\": [\n";
    for (std::size_t i = 0; i < map.cells.size(); ++i) {
      const auto& c = map.cells[i];
      out << "    {\"v\": " << c.action.v << ", \"steer\": " << c.action.steer
          << ", \"collided\": " << (c.collided ? "true" : "false")
          << ", \"feasible\": " << (c.feasible ? "true" : "false")
          << ", \"remaining\": " << c.remaining_length << "}";
      out << (i + 1 < map.cells.size() ? ",\n" : "\n");
    }
    out << "  ]\n}\n";
  }

  // Vector figure over the local action space: v on x, steering on y.
  const double cell_px = 22.0;
  const double W = map.grid * cell_px, H = map.grid * cell_px;
  std::ofstream out(path_prefix + ".svg");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W + 80 << "\" height=\""
      << H + 40 << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  double max_len = 1e-9;
  for (const auto& c : map.cells)
    if (c.feasible) max_len = std::max(max_len, c.remaining_length);
  for (int vi = 0; vi < map.grid; ++vi) {
    for (int si = 0; si < map.grid; ++si) {
      const auto& c = map.cells[static_cast<std::size_t>(vi) * map.grid + si];
      std::string fill = "#d93025";  // infeasible
      if (c.feasible) {
        // Shorter remaining path -> greener.
        const double t = std::clamp(c.remaining_length / max_len, 0.0, 1.0);
        const int red = static_cast<int>(40 + 200 * t);
        fill = "rgb(" + std::to_string(red) + ",200,60)";
      } else if (c.collided) {
        fill = "#7a1f1a";
      }
      out << "<rect x=\"" << 40 + vi * cell_px << "\" y=\"" << (map.grid - 1 - si) * cell_px + 10
          << "\" width=\"" << cell_px - 1 << "\" height=\"" << cell_px - 1 << "\" fill=\"" << fill
          << "\"/>\n";
    }
  }
  const auto& first = map.cells.front().action;
  const auto& last = map.cells.back().action;
  auto vx = [&](double v) {
    return 40 + (v - first.v) / (last.v - first.v) * (map.grid - 1) * cell_px + cell_px / 2;
  };
  auto sy = [&](double s) {
    return (map.grid - 1) * cell_px - (s - first.steer) / (last.steer - first.steer) * (map.grid - 1) * cell_px +
           10 + cell_px / 2;
  };
  const char* colors[] = {"#1a73e8", "#7b1fa2", "#000000", "#e37400"};
  int ci = 0;
  for (const auto& ov : overlays) {
    const char* color = colors[ci++ % 4];
    for (const auto& a : ov.samples)
      out << "<circle cx=\"" << vx(a.v) << "\" cy=\"" << sy(a.steer)
          << "\" r=\"2.2\" fill=\"" << color << "\" opacity=\"0.7\"/>\n";
    out << "<text x=\"" << 44 << "\" y=\"" << H + 24 + 0 << "\" font-size=\"11\" fill=\"" << color
        << "\" font-family=\"sans-serif\" dx=\"" << (ci - 1) * 90 << "\">" << ov.name
        << "</text>\n";
  }
  out << "<text x=\"40\" y=\"" << H + 36
      << "\" font-size=\"11\" font-family=\"sans-serif\">step length (x) vs steering (y)</text>\n";
  out << "</svg>\n";
}

}  // namespace drip::harness
