#include <json.hpp>

#include <queue>
#include <sstream>

#include "ddn/graph.hpp"

namespace ddn {

using nlohmann::json;

std::string export_dot(const Graph& g) {
  std::ostringstream os;
  os << "digraph ddnet {\n  rankdir=TB;\n";
  for (const GNode& n : g.nodes()) {
    os << "  n" << n.id << " [label=\"" << n.name << "\\n"
       << to_string(n.kind) << " " << n.out_shape.str() << "\"";
    if (n.head_index >= 0) os << ", shape=doubleoctagon";
    os << "];\n";
  }
  for (const GNode& n : g.nodes())
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      os << "  n" << n.inputs[i] << " -> n" << n.id;
      const SkipTag t = n.input_tags[i];
      if (t != SkipTag::None) {
        const char* color = t == SkipTag::Forward     ? "blue"
                            : t == SkipTag::Backward  ? "red"
                                                      : "darkgreen";
        os << " [label=\"" << to_string(t) << "\", color=" << color << "]";
      }
      os << ";\n";
    }
  os << "}\n";
  return os.str();
}

std::string export_json(const Graph& g) {
  json nodes = json::array(), edges = json::array();
  for (const GNode& n : g.nodes()) {
    json jn{{"id", n.id},
            {"name", n.name},
            {"kind", to_string(n.kind)},
            {"shape", {n.out_shape.n, n.out_shape.c, n.out_shape.h, n.out_shape.w}}};
    if (n.head_index >= 0) jn["head"] = n.head_index;
    nodes.push_back(jn);
    for (std::size_t i = 0; i < n.inputs.size(); ++i)
      edges.push_back(json{{"src", n.inputs[i]},
                           {"dst", n.id},
                           {"tag", to_string(n.input_tags[i])}});
  }
  return json{{"nodes", nodes}, {"edges", edges}}.dump(2) + "\n";
}

GraphStructure structure_of(const Graph& g) {
  GraphStructure s;
  for (const GNode& n : g.nodes()) {
    s.nodes.push_back({n.name, to_string(n.kind), n.out_shape});
    for (std::size_t i = 0; i < n.inputs.size(); ++i)
      s.edges.emplace_back(n.inputs[i], n.id, to_string(n.input_tags[i]));
  }
  return s;
}

GraphStructure parse_graph_json(const std::string& text) {
  const json j = json::parse(text);
  GraphStructure s;
  for (const auto& jn : j.at("nodes")) {
    const auto& sh = jn.at("shape");
    s.nodes.push_back({jn.at("name"), jn.at("kind"),
                       Shape4{sh[0], sh[1], sh[2], sh[3]}});
  }
  for (const auto& je : j.at("edges"))
    s.edges.emplace_back(je.at("src").get<int>(), je.at("dst").get<int>(),
                         je.at("tag").get<std::string>());
  return s;
}

bool isomorphic(const GraphStructure& a, const GraphStructure& b) {
  if (a.nodes.size() != b.nodes.size() || a.edges.size() != b.edges.size())
    return false;
  // node names are unique and stable, so name-keyed comparison decides
  auto keyed = [](const GraphStructure& s) {
    std::set<std::string> nodes;
    std::set<std::tuple<std::string, std::string, std::string>> edges;
    for (const auto& n : s.nodes)
      nodes.insert(n.name + "|" + n.kind + "|" + n.shape.str());
    for (const auto& [u, v, t] : s.edges)
      edges.emplace(s.nodes[u].name, s.nodes[v].name, t);
    return std::pair(nodes, edges);
  };
  return keyed(a) == keyed(b);
}

bool is_acyclic(const GraphStructure& s) {
  std::vector<int> indeg(s.nodes.size(), 0);
  std::vector<std::vector<int>> adj(s.nodes.size());
  for (const auto& [u, v, t] : s.edges) {
    adj[u].push_back(v);
    ++indeg[v];
  }
  std::queue<int> q;
  for (std::size_t i = 0; i < indeg.size(); ++i)
    if (indeg[i] == 0) q.push(static_cast<int>(i));
  std::size_t seen = 0;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    ++seen;
    for (int v : adj[u])
      if (--indeg[v] == 0) q.push(v);
  }
  return seen == s.nodes.size();
}

std::set<std::tuple<std::string, std::string, std::string>> logical_edge_set(
    const Graph& g) {
  const auto& nodes = g.nodes();
  // contract skip-junction nodes to their primary dataflow input
  std::vector<int> rep(nodes.size());
  for (const GNode& n : nodes) {
    int r = n.id;
    while (nodes[r].junction) r = nodes[r].inputs[0];
    rep[n.id] = r;
  }
  // Structural identity independent of node numbering: named nodes use their
  // name; anonymous ones compose their kind with their (contracted) inputs'
  // identities. This keeps edge keys stable when skip wiring inserts or
  // removes junction nodes.
  std::vector<std::string> lname(nodes.size());
  auto autonamed = [&](const GNode& n) {
    return n.name == to_string(n.kind) + "_" + std::to_string(n.id);
  };
  auto ident = [&](int id) -> const std::string& {
    int r = rep[id];
    if (lname[r].empty()) {
      const GNode& n = nodes[r];
      if (!autonamed(n)) {
        lname[r] = n.name;
      } else {
        std::string s = to_string(n.kind) + "(";
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          if (n.input_tags[i] != SkipTag::None) continue;  // skip wiring
          if (s.back() != '(') s += ",";
          s += lname[rep[n.inputs[i]]];
        }
        lname[r] = s + ")";
      }
    }
    return lname[r];
  };
  // creation order is topological, so inputs are resolved before consumers
  for (const GNode& n : nodes) ident(n.id);

  std::set<std::tuple<std::string, std::string, std::string>> out;
  for (const GNode& n : nodes)
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const std::string tag = to_string(n.input_tags[i]);
      if (n.junction) {
        if (n.input_tags[i] != SkipTag::None)
          out.emplace(ident(n.inputs[i]), ident(n.id), tag);
      } else {
        out.emplace(ident(n.inputs[i]), autonamed(n) ? ident(n.id) : n.name,
                    tag);
      }
    }
  return out;
}

}  // namespace ddn
