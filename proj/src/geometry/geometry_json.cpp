#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"

#include <nlohmann/json.hpp>

namespace perfhom {

namespace {

nlohmann::json vec_to_json(const Vec3& v, int dim) {
  auto a = nlohmann::json::array();
  for (int i = 0; i < dim; ++i) a.push_back(v[i]);
  return a;
}

Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() < 1 || j.size() > 3) {
    throw Error(ErrorCode::invalid_argument, "expected a coordinate array of length 1..3");
  }
  Vec3 v = Vec3::Zero();
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

void to_json(nlohmann::json& j, const Box& box) {
  j = {{"dim", box.dim}, {"lo", vec_to_json(box.lo, box.dim)}, {"hi", vec_to_json(box.hi, box.dim)}};
}

void from_json(const nlohmann::json& j, Box& box) {
  box.lo = vec_from_json(j.at("lo"));
  box.hi = vec_from_json(j.at("hi"));
  box.dim = j.value("dim", static_cast<int>(j.at("lo").size()));
  for (int i = 0; i < box.dim; ++i) {
    if (!(box.hi[i] > box.lo[i])) throw Error(ErrorCode::invalid_argument, "box must have hi > lo on every axis");
  }
}

void to_json(nlohmann::json& j, const Shape& s) {
  j = {{"dim", s.dim},
       {"family", to_string(s.family)},
       {"offset", vec_to_json(s.offset, s.dim)},
       {"boundary_measure", s.boundary_measure}};
  switch (s.family) {
    case ShapeFamily::ball:
      j["radius"] = s.semi_axes[0];
      break;
    case ShapeFamily::ellipse:
      j["semi_axes"] = vec_to_json(s.semi_axes, s.dim);
      break;
    case ShapeFamily::star:
      j["radius"] = s.semi_axes[0];
      j["amplitude"] = s.star_amplitude;
      j["lobes"] = s.star_lobes;
      break;
  }
}

void from_json(const nlohmann::json& j, Shape& s) {
  const int dim = j.value("dim", 2);
  const ShapeFamily family = shape_family_from_string(j.value("family", std::string("ball")));
  const Vec3 offset = j.contains("offset") ? vec_from_json(j.at("offset")) : Vec3::Zero();
  switch (family) {
    case ShapeFamily::ball:
      s = Shape::ball(dim, j.value("radius", 0.25), offset);
      break;
    case ShapeFamily::ellipse:
      s = Shape::ellipse(dim, vec_from_json(j.at("semi_axes")), offset);
      break;
    case ShapeFamily::star:
      s = Shape::star(j.value("radius", 0.25), j.value("amplitude", 0.2), j.value("lobes", 5), offset);
      break;
  }
}

void to_json(nlohmann::json& j, const LayoutConstants& c) {
  j = {{"R0", c.R0}, {"R1", c.R1}, {"R2", c.R2}, {"b", c.b}, {"tau0", c.tau0}};
}

void from_json(const nlohmann::json& j, LayoutConstants& c) {
  c.R0 = j.value("R0", c.R0);
  c.R1 = j.value("R1", c.R1);
  c.R2 = j.value("R2", c.R2);
  c.b = j.value("b", c.b);
  c.tau0 = j.value("tau0", c.tau0);
}

void to_json(nlohmann::json& j, const PerforationLayout& layout) {
  auto centers = nlohmann::json::array();
  for (const auto& c : layout.centers) centers.push_back(vec_to_json(c, layout.dim));
  j = {{"dim", layout.dim},         {"domain", layout.domain}, {"s0", layout.s0},
       {"eps", layout.eps},         {"eta", layout.eta},       {"constants", layout.constants},
       {"centers", centers},        {"shapes", layout.shapes}, {"dropped", layout.dropped}};
}

void from_json(const nlohmann::json& j, PerforationLayout& layout) {
  layout.dim = j.at("dim").get<int>();
  layout.domain = j.at("domain").get<Box>();
  layout.s0 = j.at("s0").get<double>();
  layout.eps = j.at("eps").get<double>();
  layout.eta = j.value("eta", 1.0);
  layout.constants = j.value("constants", LayoutConstants{});
  layout.centers.clear();
  for (const auto& c : j.at("centers")) layout.centers.push_back(vec_from_json(c));
  layout.shapes = j.at("shapes").get<std::vector<Shape>>();
  layout.dropped = j.value("dropped", 0);
  if (layout.shapes.size() == 1 && layout.centers.size() > 1) {
    layout.shapes.assign(layout.centers.size(), layout.shapes.front());
  }
  if (layout.shapes.size() != layout.centers.size()) {
    throw Error(ErrorCode::invalid_argument, "layout needs one shape per centre");
  }
}

void to_json(nlohmann::json& j, const ValidationReport& r) {
  auto checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name}, {"pass", c.pass}, {"margin", c.margin}, {"detail", c.detail}});
  }
  j = {{"pass", r.pass},
       {"min_gap_ratio", r.min_gap_ratio},
       {"max_offset_ratio", r.max_offset_ratio},
       {"min_inscribed_radius", r.min_inscribed_radius},
       {"max_circumradius", r.max_circumradius},
       {"sup_boundary_measure", r.sup_boundary_measure},
       {"min_domain_clearance", r.min_domain_clearance},
       {"checks", checks}};
}

}  // namespace perfhom
