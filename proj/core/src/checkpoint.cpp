#include "hopgate/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace hopgate {

namespace {

using nlohmann::json;

json tensor_to_json(const Mat& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

json tensor_to_json(const Vec& v) {
  return {{"rows", v.size()}, {"cols", 1}, {"data", v.data()}};
}

Mat mat_from_json(const json& t) {
  return Mat::from(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
                   t.at("data").get<std::vector<double>>());
}

Vec vec_from_json(const json& t) {
  auto values = t.at("data").get<std::vector<double>>();
  return Vec::from(std::move(values));
}

Variant variant_from_string(const std::string& s) {
  if (s == "conventional") return Variant::Conventional;
  if (s == "key_value") return Variant::KeyValue;
  throw ConfigError("unknown variant '" + s + "'");
}

AppMode app_mode_from_string(const std::string& s) {
  if (s == "pre_embedded") return AppMode::PreEmbedded;
  if (s == "interactive") return AppMode::Interactive;
  throw ConfigError("unknown app mode '" + s + "'");
}

Tying tying_from_string(const std::string& s) {
  if (s == "adjacent") return Tying::Adjacent;
  if (s == "hop_specific") return Tying::HopSpecific;
  throw ConfigError("unknown tying '" + s + "'");
}

void require_finite(const Mat& m, const std::string& name) {
  if (!m.all_finite()) throw ConfigError("tensor '" + name + "' has non-finite entries");
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  ckpt.weights.validate(ckpt.hyper);
  const auto& h = ckpt.hyper;
  json doc;
  doc["format_version"] = 1;
  doc["hyper"] = {
      {"d", h.d},
      {"vocab_size", h.vocab_size},
      {"n_s", h.n_s},
      {"n_w", h.n_w},
      {"hops", h.hops},
      {"variant", std::string(to_string(h.variant))},
      {"app_mode", std::string(to_string(h.app_mode))},
      {"tying", std::string(to_string(h.tying))},
      {"icn_hidden", h.icn_hidden},
  };

  json tensors = json::object();
  for (std::size_t i = 0; i < ckpt.weights.embeds.size(); ++i) {
    tensors["E" + std::to_string(i)] = tensor_to_json(ckpt.weights.embeds[i]);
  }
  tensors["W"] = tensor_to_json(ckpt.weights.w);
  if (ckpt.weights.w_e) tensors["W_E"] = tensor_to_json(*ckpt.weights.w_e);
  for (std::size_t i = 0; i < ckpt.weights.r.size(); ++i) {
    tensors["R" + std::to_string(i + 1)] = tensor_to_json(ckpt.weights.r[i]);
  }
  if (ckpt.weights.icn) {
    tensors["icn.W1"] = tensor_to_json(ckpt.weights.icn->w1);
    tensors["icn.b1"] = tensor_to_json(ckpt.weights.icn->b1);
    tensors["icn.W2"] = tensor_to_json(ckpt.weights.icn->w2);
    tensors["icn.b2"] = tensor_to_json(ckpt.weights.icn->b2);
  }
  if (ckpt.pruned_w) tensors["W.pruned"] = tensor_to_json(ckpt.pruned_w->rows);
  if (ckpt.pruned_w_e) tensors["W_E.pruned"] = tensor_to_json(ckpt.pruned_w_e->rows);
  doc["tensors"] = std::move(tensors);

  if (ckpt.pruned_w) {
    doc["important_indices"] = ckpt.pruned_w->important_indices;
  } else if (ckpt.pruned_w_e) {
    doc["important_indices"] = ckpt.pruned_w_e->important_indices;
  }
  return doc.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.at("format_version").get<int>() != 1) {
    throw ConfigError("unsupported checkpoint format_version");
  }
  const json& h = doc.at("hyper");
  HyperParams hyper;
  hyper.d = h.at("d").get<std::size_t>();
  hyper.vocab_size = h.at("vocab_size").get<std::size_t>();
  hyper.n_s = h.at("n_s").get<std::size_t>();
  hyper.n_w = h.at("n_w").get<std::size_t>();
  hyper.hops = h.at("hops").get<std::size_t>();
  hyper.variant = variant_from_string(h.at("variant").get<std::string>());
  hyper.app_mode = app_mode_from_string(h.at("app_mode").get<std::string>());
  hyper.tying = tying_from_string(h.at("tying").get<std::string>());
  hyper.icn_hidden = h.at("icn_hidden").get<std::size_t>();
  hyper.validate();

  const json& tensors = doc.at("tensors");
  auto need = [&](const std::string& name) -> const json& {
    if (!tensors.contains(name)) throw ConfigError("checkpoint is missing tensor '" + name + "'");
    return tensors.at(name);
  };

  Checkpoint ckpt{hyper,
                  ModelWeights{.embeds = {}, .w = mat_from_json(need("W"))},
                  std::nullopt,
                  std::nullopt};
  require_finite(ckpt.weights.w, "W");
  for (std::size_t i = 0; i < hyper.embed_count(); ++i) {
    const std::string name = "E" + std::to_string(i);
    ckpt.weights.embeds.push_back(mat_from_json(need(name)));
    require_finite(ckpt.weights.embeds.back(), name);
  }
  if (tensors.contains("W_E")) {
    ckpt.weights.w_e = mat_from_json(tensors.at("W_E"));
    require_finite(*ckpt.weights.w_e, "W_E");
  }
  if (hyper.variant == Variant::KeyValue) {
    for (std::size_t i = 1; i <= hyper.hops; ++i) {
      const std::string name = "R" + std::to_string(i);
      ckpt.weights.r.push_back(mat_from_json(need(name)));
      require_finite(ckpt.weights.r.back(), name);
    }
  } else {
    ckpt.weights.pe = positional_encoding(hyper.n_w, hyper.d);
  }
  if (tensors.contains("icn.W1")) {
    ckpt.weights.icn = IcnWeights{
        mat_from_json(tensors.at("icn.W1")),
        vec_from_json(tensors.at("icn.b1")),
        mat_from_json(tensors.at("icn.W2")),
        vec_from_json(tensors.at("icn.b2")),
    };
    ckpt.weights.icn->validate(hyper.d);
  }

  if (doc.contains("important_indices")) {
    const auto indices = doc.at("important_indices").get<std::vector<std::uint32_t>>();
    if (tensors.contains("W.pruned")) {
      ckpt.pruned_w = PrunedFC{mat_from_json(tensors.at("W.pruned")), indices};
      ckpt.pruned_w->validate(ckpt.weights.w);
    }
    if (tensors.contains("W_E.pruned")) {
      if (!ckpt.weights.w_e) throw ConfigError("W_E.pruned without W_E");
      ckpt.pruned_w_e = PrunedFC{mat_from_json(tensors.at("W_E.pruned")), indices};
      ckpt.pruned_w_e->validate(*ckpt.weights.w_e);
    }
  }

  ckpt.weights.validate(hyper);
  return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, checkpoint_to_json(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_json(text);
}

}  // namespace hopgate
