#pragma once

// Reference model for CoordinationStore plus a random op-sequence checker.
// The model keeps its own revision counter and mutation list; the store must
// agree with it after every op, and every watcher must read exactly the
// model's mutations under its prefix, in order, with nothing missing.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gangsim/rng.hpp"
#include "gangsim/store.hpp"

namespace store_model {

struct ModelLease {
  double ttl = 0;
  double granted_at = 0;
  std::set<std::string> keys;
};

struct Model {
  std::map<std::string, std::pair<std::string, std::optional<gangsim::LeaseId>>> kv;
  std::map<gangsim::LeaseId, ModelLease> leases;
  std::vector<gangsim::Notification> log;
  gangsim::LeaseId next_lease = 0;
  double now = 0;

  void erase(const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) return;
    if (it->second.second) {
      auto l = leases.find(*it->second.second);
      if (l != leases.end()) l->second.keys.erase(k);
    }
    kv.erase(it);
    log.push_back({k, std::nullopt, static_cast<gangsim::Revision>(log.size() + 1)});
  }

  void put(const std::string& k, const std::string& v, std::optional<gangsim::LeaseId> lease) {
    auto it = kv.find(k);
    if (it != kv.end() && it->second.second && it->second.second != lease) {
      auto l = leases.find(*it->second.second);
      if (l != leases.end()) l->second.keys.erase(k);
    }
    kv[k] = {v, lease};
    if (lease) leases.at(*lease).keys.insert(k);
    log.push_back({k, v, static_cast<gangsim::Revision>(log.size() + 1)});
  }

  void revoke(gangsim::LeaseId id) {
    auto it = leases.find(id);
    if (it == leases.end()) return;
    const auto keys = it->second.keys;
    leases.erase(it);
    for (const auto& k : keys) erase(k);
  }
};

struct Watch {
  gangsim::WatchId id;
  std::string prefix;
  gangsim::Revision from;
  std::vector<gangsim::Notification> seen;
};

struct Outcome {
  std::string failure;  // empty when every check held
  std::size_t expired_keys = 0;
  std::size_t notifications = 0;
};

inline Outcome check_random_sequence(std::uint64_t seed, int n_ops) {
  using namespace gangsim;
  Rng rng(seed);
  CoordinationStore store;
  Model m;
  std::vector<Watch> watches;
  Outcome out;
  std::ostringstream err;
  const std::vector<std::string> prefixes = {"", "/jobs/", "/jobs/a/", "/nodes/"};
  auto random_key = [&] {
    static const char* roots[] = {"/jobs/a/", "/jobs/b/", "/nodes/", "/misc/"};
    return std::string(roots[rng.below(4)]) + std::to_string(rng.below(6));
  };
  auto alive_lease = [&]() -> std::optional<LeaseId> {
    if (m.leases.empty()) return std::nullopt;
    auto it = m.leases.begin();
    std::advance(it, static_cast<long>(rng.below(m.leases.size())));
    return it->first;
  };

  for (int op = 0; op < n_ops && err.str().empty(); ++op) {
    const auto pick = rng.below(100);
    if (pick < 35) {
      const std::string k = random_key();
      const std::string v = "v" + std::to_string(op);
      std::optional<LeaseId> lease;
      if (rng.below(2) == 0) lease = alive_lease();
      const bool usable = !lease || m.leases.at(*lease).granted_at + m.leases.at(*lease).ttl >= m.now;
      try {
        store.put(k, v, lease);
        if (!usable) err << "op " << op << ": put on expired lease accepted";
        else m.put(k, v, lease);
      } catch (const Error& e) {
        if (usable || e.code() != ErrorCode::UnknownLease) err << "op " << op << ": " << e.what();
      }
    } else if (pick < 50) {
      const std::string k = random_key();
      store.erase(k);
      m.erase(k);
    } else if (pick < 55) {
      const std::string p = prefixes[1 + rng.below(3)];
      store.delete_prefix(p);
      std::vector<std::string> doomed;
      for (const auto& [k, _] : m.kv)
        if (k.starts_with(p)) doomed.push_back(k);
      for (const auto& k : doomed) m.erase(k);
    } else if (pick < 63) {
      const double ttl = 1.0 + static_cast<double>(rng.below(20));
      const LeaseId id = store.grant_lease(ttl, m.now);
      m.leases[++m.next_lease] = ModelLease{ttl, m.now, {}};
      if (id != m.next_lease) err << "op " << op << ": lease id " << id;
    } else if (pick < 70) {
      if (auto l = alive_lease()) {
        store.keep_alive(*l, m.now);
        m.leases.at(*l).granted_at = m.now;
      }
    } else if (pick < 73) {
      if (auto l = alive_lease()) {
        store.revoke(*l);
        m.revoke(*l);
      }
    } else if (pick < 88) {
      m.now += static_cast<double>(rng.below(8));
      // Keys that must disappear: those on leases whose window has passed.
      std::set<std::string> doomed;
      std::vector<LeaseId> gone;
      for (const auto& [id, l] : m.leases) {
        if (m.now > l.granted_at + l.ttl) {
          gone.push_back(id);
          doomed.insert(l.keys.begin(), l.keys.end());
        }
      }
      const auto deleted = store.expire_leases(m.now);
      for (LeaseId id : gone) m.revoke(id);
      if (std::set<std::string>(deleted.begin(), deleted.end()) != doomed) {
        err << "op " << op << ": expired key set differs";
      }
      out.expired_keys += deleted.size();
      for (const auto& k : doomed) {
        if (store.get(k)) err << "op " << op << ": key '" << k << "' survived its lease";
      }
      for (LeaseId id : gone) {
        if (store.has_lease(id)) err << "op " << op << ": lease " << id << " survived";
      }
    } else if (pick < 93) {
      const std::string p = prefixes[rng.below(prefixes.size())];
      const Revision from = static_cast<Revision>(rng.below(static_cast<std::uint64_t>(store.revision()) + 2));
      watches.push_back(Watch{store.watch(p, from), p, std::max<Revision>(from, 1), {}});
    } else {
      for (auto& w : watches) {
        auto batch = store.poll(w.id);
        w.seen.insert(w.seen.end(), batch.begin(), batch.end());
      }
    }

    if (store.revision() != static_cast<Revision>(m.log.size())) {
      err << "op " << op << ": revision " << store.revision() << " != " << m.log.size();
    }
    if (store.size() != m.kv.size()) err << "op " << op << ": size mismatch";
    for (const auto& [k, v] : m.kv) {
      const auto got = store.get(k);
      if (!got || *got != v.first) err << "op " << op << ": key '" << k << "' mismatch";
    }
  }

  for (auto& w : watches) {
    auto batch = store.poll(w.id);
    w.seen.insert(w.seen.end(), batch.begin(), batch.end());
    std::vector<Notification> expected;
    for (const auto& n : m.log) {
      if (n.revision >= w.from && n.key.starts_with(w.prefix)) expected.push_back(n);
    }
    for (std::size_t i = 1; i < w.seen.size(); ++i) {
      if (w.seen[i].revision <= w.seen[i - 1].revision) err << "watch " << w.id << ": out of order";
    }
    if (w.seen != expected) err << "watch " << w.id << " on '" << w.prefix << "': stream differs from model";
    out.notifications += w.seen.size();
  }
  out.failure = err.str();
  return out;
}

}  // namespace store_model
