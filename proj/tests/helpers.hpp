#pragma once
// Shared fixtures for the test suite: a small university-style schema/pool
// and builders for well-formed workflow chains.

#include <string>
#include <vector>

#include "faforge/dag.hpp"
#include "faforge/schema.hpp"

namespace fixtures {

using namespace faforge;

inline Schema university_schema() {
  return Schema::from_json(nlohmann::json::parse(R"({
    "features": {
      "role":   {"type": "categorical",
                 "values": ["masters", "phd", "postdoc", "professor"]},
      "dept":   {"type": "categorical", "values": ["cs", "ee", "math"]},
      "salary": {"type": "numeric", "bounds": [0, 500000]},
      "hours":  {"type": "numeric", "bounds": [0, 100]}
    }
  })"));
}

inline Predicate role_is(const std::string& v) {
  return Predicate{{Atom{"role", Cmp::Eq, v}}};
}

// Appends a full Access->Encrypt->Aggregate->NoiseAdd->Decrypt chain for one
// slot and returns the Decrypt id. Ids derive from `tag`.
inline std::string add_chain(FaDag& d, const std::string& tag, const Predicate& pred,
                             const std::string& slot, double epsilon = 1.0,
                             double sensitivity = 1.0) {
  std::string acc = "acc_" + tag, enc = "enc_" + tag, agg = "agg_" + tag,
              dp = "dp_" + tag, dec = "dec_" + tag;
  Node a;
  a.id = acc;
  a.kind = OpKind::Access;
  a.predicate = pred;
  a.outputs = {slot};
  d.add_node(a);
  Node e;
  e.id = enc;
  e.kind = OpKind::Encrypt;
  e.feature = slot;
  d.add_node(e);
  Node g;
  g.id = agg;
  g.kind = OpKind::Aggregate;
  g.agg_fn = "sum";
  d.add_node(g);
  Node np;
  np.id = dp;
  np.kind = OpKind::NoiseAdd;
  np.dp_params = DpParams{epsilon, sensitivity};
  d.add_node(np);
  Node dn;
  dn.id = dec;
  dn.kind = OpKind::Decrypt;
  d.add_node(dn);
  d.add_edge(acc, enc);
  d.add_edge(enc, agg);
  d.add_edge(agg, dp);
  d.add_edge(dp, dec);
  return dec;
}

// Mean-of-salary workflow: two chains (salary sum, population count) and one
// dividing Calculate registered as the answer.
inline FaDag mean_salary_dag(const Predicate& pred, const std::string& tag) {
  FaDag d;
  std::string dec_s = add_chain(d, "s_" + tag, pred, "salary", 1.0, 500000.0);
  std::string dec_n = add_chain(d, "n_" + tag, pred, "one", 1.0, 1.0);
  Node c;
  c.id = "cal_" + tag;
  c.kind = OpKind::Calculate;
  c.calc_expr = dec_s + " / " + dec_n;
  d.add_node(c);
  d.add_edge(dec_s, c.id);
  d.add_edge(dec_n, c.id);
  d.set_answer_nodes({c.id});
  return d;
}

} // namespace fixtures
