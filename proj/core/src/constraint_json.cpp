#include <cmath>

#include "tabguide/errors.hpp"
#include "tabguide/guidance.hpp"

namespace tabguide {

namespace {

using nlohmann::json;

double standardize(const ColumnBlock& b, double raw) { return (raw - b.mean) / b.stddev; }

const ColumnBlock& column_block(const Encoder& enc, const json& j, const char* key = "column") {
  if (!j.contains(key) || !j[key].is_string()) {
    throw SpecError(std::string("constraint needs a \"") + key + "\" name");
  }
  try {
    return enc.blocks()[enc.column_index(j[key].get<std::string>())];
  } catch (const DataError& e) {
    throw SpecError(e.what());
  }
}

std::size_t category_of(const Encoder& enc, const ColumnBlock& b, const json& value) {
  if (!value.is_string()) throw SpecError("column '" + b.column.name + "' expects a category label");
  try {
    return enc.category_index(enc.column_index(b.column.name), value.get<std::string>());
  } catch (const DataError& e) {
    throw SpecError(e.what());
  }
}

double raw_number(const json& v, const std::string& what) {
  if (!v.is_number()) throw SpecError(what + " must be a number");
  return v.get<double>();
}

Norm norm_or(const json& j, const char* key, Norm fallback) {
  return j.contains(key) ? parse_norm(j[key].get<std::string>()) : fallback;
}

AffineSelector parse_terms(const json& j, const Encoder& enc) {
  AffineSelector::Output out;
  for (const auto& term : j.at("terms")) {
    const ColumnBlock& b = column_block(enc, term);
    const double w = term.contains("weight") ? raw_number(term["weight"], "weight") : 1.0;
    std::size_t index = b.offset;
    if (b.column.kind == ColumnKind::Categorical) {
      if (!term.contains("category")) {
        throw SpecError("term on categorical column '" + b.column.name + "' needs a \"category\"");
      }
      index += category_of(enc, b, term["category"]);
    }
    out.terms.push_back({index, w});
  }
  if (j.contains("offset")) out.offset = raw_number(j["offset"], "offset");
  AffineSelector s;
  s.outputs.push_back(std::move(out));
  return s;
}

ConstraintSpec parse_inequality(const json& j, const Encoder& enc) {
  const LossDefaults defs = default_loss_for(TaskKind::Inequality);
  Inequality s;
  s.lambda = j.contains("lambda") ? raw_number(j["lambda"], "lambda") : defs.lambda_g;
  s.lower_norm = norm_or(j, "norm_lower", defs.lower_norm);
  s.upper_norm = norm_or(j, "norm_upper", defs.upper_norm);
  if (j.contains("terms")) {
    s.selector = parse_terms(j, enc);
    if (j.contains("lower")) s.lower = raw_number(j["lower"], "lower");
    if (j.contains("upper")) s.upper = raw_number(j["upper"], "upper");
  } else {
    const ColumnBlock& b = column_block(enc, j);
    if (b.column.kind != ColumnKind::Continuous) {
      throw SpecError("inequality on categorical column '" + b.column.name +
                      "'; use an equality or terms with a category");
    }
    s.selector = AffineSelector::coordinate(b.offset);
    // Bounds are given in raw units and compared in standardized space.
    if (j.contains("lower")) s.lower = standardize(b, raw_number(j["lower"], "lower"));
    if (j.contains("upper")) s.upper = standardize(b, raw_number(j["upper"], "upper"));
  }
  return {s};
}

ConstraintSpec parse_equality(const json& j, const Encoder& enc) {
  const LossDefaults defs = default_loss_for(TaskKind::Inequality);
  Equality s;
  s.lambda = j.contains("lambda") ? raw_number(j["lambda"], "lambda") : defs.lambda_h;
  s.norm = norm_or(j, "norm", defs.equality_norm);
  if (j.contains("terms")) {
    s.selector = parse_terms(j, enc);
    s.value = {raw_number(j.at("value"), "value")};
    return {s};
  }
  const ColumnBlock& b = column_block(enc, j);
  if (!j.contains("value")) throw SpecError("equality needs a \"value\"");
  if (b.column.kind == ColumnKind::Continuous) {
    s.selector = AffineSelector::coordinate(b.offset);
    s.value = {standardize(b, raw_number(j["value"], "value"))};
  } else {
    const std::size_t k = category_of(enc, b, j["value"]);
    s.selector = AffineSelector::block(b.offset, b.width);
    s.value.assign(b.width, 0.0);
    s.value[k] = 1.0;
  }
  return {s};
}

ConstraintSpec parse_imputation(const json& j, const Encoder& enc) {
  const auto d = static_cast<Eigen::Index>(enc.dim());
  Imputation s;
  s.norm = norm_or(j, "norm", default_loss_for(TaskKind::Imputation).imputation_norm);
  s.observed = Matrix::Zero(1, d);
  s.target = Matrix::Zero(1, d);
  if (!j.contains("values") || !j["values"].is_object() || j["values"].empty()) {
    throw SpecError("imputation needs a non-empty \"values\" object");
  }
  for (const auto& [name, value] : j["values"].items()) {
    json ref{{"column", name}};
    const ColumnBlock& b = column_block(enc, ref);
    const auto off = static_cast<Eigen::Index>(b.offset);
    if (b.column.kind == ColumnKind::Continuous) {
      s.observed(0, off) = 1.0;
      s.target(0, off) = standardize(b, raw_number(value, "value of '" + name + "'"));
    } else {
      const auto k = static_cast<Eigen::Index>(category_of(enc, b, value));
      s.observed.block(0, off, 1, static_cast<Eigen::Index>(b.width)).setOnes();
      s.target(0, off + k) = 1.0;
    }
  }
  return {s};
}

ConstraintSpec parse_ce(const json& j, const Encoder& enc) {
  CategoricalCE s;
  if (!j.contains("values") || !j["values"].is_object() || j["values"].empty()) {
    throw SpecError("ce needs a non-empty \"values\" object");
  }
  for (const auto& [name, value] : j["values"].items()) {
    json ref{{"column", name}};
    const ColumnBlock& b = column_block(enc, ref);
    if (b.column.kind != ColumnKind::Categorical) {
      throw SpecError("ce applies to categorical columns; '" + name + "' is continuous");
    }
    s.blocks.push_back({b.offset, b.width, {static_cast<int>(category_of(enc, b, value))}});
  }
  return {s};
}

}  // namespace

ConstraintSpec parse_constraint(const json& j, const Encoder& enc) {
  if (!j.is_object() || !j.contains("type")) throw SpecError("constraint needs a \"type\"");
  const auto type = j["type"].get<std::string>();
  ConstraintSpec spec;
  if (type == "inequality") {
    spec = parse_inequality(j, enc);
  } else if (type == "equality") {
    spec = parse_equality(j, enc);
  } else if (type == "imputation") {
    spec = parse_imputation(j, enc);
  } else if (type == "ce") {
    spec = parse_ce(j, enc);
  } else if (type == "and" || type == "or") {
    if (!j.contains("children") || !j["children"].is_array()) {
      throw SpecError("\"" + type + "\" needs a \"children\" array");
    }
    std::vector<ConstraintSpec> children;
    for (const auto& c : j["children"]) children.push_back(parse_constraint(c, enc));
    if (type == "and") {
      spec = ConstraintSpec{Conjunction{std::move(children)}};
    } else {
      spec = ConstraintSpec{Disjunction{std::move(children)}};
    }
  } else {
    throw SpecError("unknown constraint type '" + type + "'");
  }
  validate(spec, enc.dim(), 1);
  return spec;
}

}  // namespace tabguide
