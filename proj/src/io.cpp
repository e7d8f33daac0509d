#include "milr/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace milr {

using nlohmann::json;

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && (*first == ' ' || *first == '+')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw ValidationError("not a number: '" + text + "'");
  return v;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    if (first) {
      table.header = split(line, ',');
      first = false;
      continue;
    }
    auto fields = split(line, ',');
    if (fields.size() != table.header.size()) {
      throw ValidationError("CSV row " + std::to_string(table.rows.size() + 1) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (first) throw ValidationError("CSV input is empty");
  return table;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ValidationError("CSV has no column '" + name + "'");
}

std::string dataset_to_csv(const Dataset& data) {
  std::string out;
  for (std::size_t k = 0; k < data.input_dim; ++k) out += (k ? ",x_" : "x_") + std::to_string(k + 1);
  for (std::size_t k = 0; k < data.label_dim; ++k) out += ",y_" + std::to_string(k + 1);
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    const auto y = data.label(i);
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (k) out += ',';
      out += format_double(x[k]);
    }
    for (double v : y) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  const CsvTable table = parse_csv(text);
  std::size_t dx = 0, dy = 0;
  for (const auto& name : table.header) {
    if (dy == 0 && name == "x_" + std::to_string(dx + 1)) {
      ++dx;
    } else if (name == "y_" + std::to_string(dy + 1)) {
      ++dy;
    } else {
      throw ValidationError("unexpected dataset column '" + name + "' (expected x_1..x_dx,y_1..y_dy)");
    }
  }
  if (dx == 0 || dy == 0) throw ValidationError("dataset needs at least one x_ and one y_ column");
  Dataset data(dx, dy);
  Vector x(dx), y(dy);
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < dx; ++k) x[k] = parse_double(row[k]);
    for (std::size_t k = 0; k < dy; ++k) y[k] = parse_double(row[dx + k]);
    data.append(x, y);
  }
  if (data.empty()) throw ValidationError("dataset has no rows");
  return data;
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ValidationError("unknown field '" + key + "' in " + where);
  }
}

const json& field(const json& obj, const std::string& key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError("missing field '" + key + "' in " + where);
  return *it;
}

Vector numbers(const json& arr, const std::string& where) {
  if (!arr.is_array()) throw ValidationError(where + " must be an array");
  Vector out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) throw ValidationError(where + " must contain only numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::size_t count_field(const json& obj, const std::string& key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number_unsigned()) throw ValidationError("'" + key + "' in " + where + " must be a non-negative integer");
  return v.get<std::size_t>();
}

double real_field(const json& obj, const std::string& key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw ValidationError("'" + key + "' in " + where + " must be a number");
  return v.get<double>();
}

}  // namespace

std::string model_to_json(const ModelDocument& model) {
  const auto& head = model.head;
  json doc;
  doc["schema_version"] = kModelSchemaVersion;
  doc["input_dim"] = head.input_dim();
  doc["label_dim"] = head.label_dim();
  doc["activation"] = to_string(head.activation());
  doc["sigma_min"] = head.clamp().sigma_min;
  doc["sigma_max"] = head.clamp().sigma_max;
  json layers = json::array();
  for (const auto& layer : head.layers()) {
    layers.push_back({{"rows", layer.rows}, {"cols", layer.cols}, {"weights", layer.weights}, {"bias", layer.bias}});
  }
  doc["layers"] = std::move(layers);
  if (model.marginal) doc["marginal"] = {{"mu", model.marginal->mu}, {"raw_sigma", model.marginal->raw_sigma}};
  return doc.dump(1) + "\n";
}

ModelDocument model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model document is not valid JSON: ") + e.what());
  }
  const std::string where = "model document";
  reject_unknown(doc,
                 {"schema_version", "input_dim", "label_dim", "activation", "sigma_min", "sigma_max", "layers",
                  "marginal"},
                 where);
  const std::size_t version = count_field(doc, "schema_version", where);
  if (version != static_cast<std::size_t>(kModelSchemaVersion)) {
    throw ValidationError("unsupported model schema_version " + std::to_string(version));
  }
  const std::size_t input_dim = count_field(doc, "input_dim", where);
  const std::size_t label_dim = count_field(doc, "label_dim", where);
  const json& act = field(doc, "activation", where);
  if (!act.is_string()) throw ValidationError("'activation' must be a string");
  const SigmaClamp clamp{real_field(doc, "sigma_min", where), real_field(doc, "sigma_max", where)};

  const json& layers_json = field(doc, "layers", where);
  if (!layers_json.is_array()) throw ValidationError("'layers' must be an array");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < layers_json.size(); ++l) {
    const std::string lw = "layer " + std::to_string(l);
    const json& lj = layers_json[l];
    reject_unknown(lj, {"rows", "cols", "weights", "bias"}, lw);
    DenseLayer layer;
    layer.rows = count_field(lj, "rows", lw);
    layer.cols = count_field(lj, "cols", lw);
    layer.weights = numbers(field(lj, "weights", lw), lw + " weights");
    layer.bias = numbers(field(lj, "bias", lw), lw + " bias");
    layers.push_back(std::move(layer));
  }
  ModelDocument model{ConditionalGaussianHead(input_dim, label_dim, std::move(layers),
                                              activation_from_string(act.get<std::string>()), clamp),
                      std::nullopt};
  if (const auto it = doc.find("marginal"); it != doc.end()) {
    reject_unknown(*it, {"mu", "raw_sigma"}, "marginal");
    MarginalGaussian marginal(label_dim, clamp);
    marginal.mu = numbers(field(*it, "mu", "marginal"), "marginal mu");
    marginal.raw_sigma = numbers(field(*it, "raw_sigma", "marginal"), "marginal raw_sigma");
    if (marginal.mu.size() != label_dim) throw ValidationError("marginal mu must have label_dim entries");
    marginal.validate();
    model.marginal = std::move(marginal);
  }
  return model;
}

std::string trace_to_csv(std::span<const TraceRecord> records) {
  std::string out = "t,loss,grad_norm_sq,lr\n";
  for (const auto& r : records) {
    out += std::to_string(r.t) + ',' + format_double(r.loss) + ',' + format_double(r.grad_norm_sq) + ',' +
           format_double(r.lr) + '\n';
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

}  // namespace milr
