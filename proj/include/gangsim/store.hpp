#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gangsim/error.hpp"

namespace gangsim {

using Revision = std::int64_t;
using LeaseId = std::int64_t;
using WatchId = std::int64_t;

inline constexpr std::size_t kMaxValueBytes = 1024;

struct KvEntry {
  std::string key;
  std::string value;
  std::optional<LeaseId> lease;
  Revision revision = 0;  // revision of the last modification
};

// One mutation as seen by watchers. A missing value means the key was deleted.
struct Notification {
  std::string key;
  std::optional<std::string> value;
  Revision revision = 0;

  bool is_delete() const noexcept { return !value.has_value(); }
  friend bool operator==(const Notification&, const Notification&) = default;
};

struct Lease {
  LeaseId id = 0;
  double ttl = 0.0;
  double granted_at = 0.0;
  std::set<std::string> keys;

  double expires_at() const noexcept { return granted_at + ttl; }
};

// In-process key-value store with prefix watches and TTL leases. Every
// mutation gets the next revision; the mutation log is kept so a watch can
// start from any past revision and read a gap-free, ordered stream.
class CoordinationStore {
 public:
  Revision revision() const noexcept { return revision_; }
  std::size_t size() const noexcept { return entries_.size(); }

  Revision put(const std::string& key, std::string value,
               std::optional<LeaseId> lease = std::nullopt) {
    if (value.size() > kMaxValueBytes) {
      throw Error(ErrorCode::ValueTooLarge, "value for '" + key + "' is " +
                                                std::to_string(value.size()) + " bytes");
    }
    if (lease) {
      auto it = leases_.find(*lease);
      if (it == leases_.end() || it->second.expires_at() < now_) {
        throw Error(ErrorCode::UnknownLease, "lease " + std::to_string(*lease) +
                                                 " does not exist or has expired");
      }
    }
    auto& entry = entries_[key];
    if (entry.lease && entry.lease != lease) detach(key, *entry.lease);
    entry.key = key;
    entry.value = std::move(value);
    entry.lease = lease;
    if (lease) leases_.at(*lease).keys.insert(key);
    entry.revision = ++revision_;
    log_.push_back(Notification{key, entry.value, revision_});
    return revision_;
  }

  std::optional<std::string> get(std::string_view key) const {
    auto it = entries_.find(std::string(key));
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
  }

  const KvEntry* entry(std::string_view key) const {
    auto it = entries_.find(std::string(key));
    return it == entries_.end() ? nullptr : &it->second;
  }

  // Returns the deletion's revision, or nullopt when the key was absent.
  std::optional<Revision> erase(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    if (it->second.lease) detach(key, *it->second.lease);
    entries_.erase(it);
    log_.push_back(Notification{key, std::nullopt, ++revision_});
    return revision_;
  }

  // Deletes every key under the prefix. Returns how many were deleted.
  std::size_t delete_prefix(std::string_view prefix) {
    std::vector<std::string> doomed;
    for (auto it = entries_.lower_bound(std::string(prefix));
         it != entries_.end() && it->first.starts_with(prefix); ++it) {
      doomed.push_back(it->first);
    }
    for (const auto& k : doomed) erase(k);
    return doomed.size();
  }

  std::vector<KvEntry> range(std::string_view prefix) const {
    std::vector<KvEntry> out;
    for (auto it = entries_.lower_bound(std::string(prefix));
         it != entries_.end() && it->first.starts_with(prefix); ++it) {
      out.push_back(it->second);
    }
    return out;
  }

  // Watches every mutation under `prefix` with revision >= from_revision,
  // including mutations that already happened.
  WatchId watch(std::string prefix, Revision from_revision = 0) {
    const WatchId id = ++next_watch_;
    watchers_.emplace(id, Watcher{std::move(prefix), std::max<Revision>(from_revision, 1)});
    return id;
  }

  void cancel_watch(WatchId id) { watchers_.erase(id); }

  // Drains pending notifications for a watcher, in revision order.
  std::vector<Notification> poll(WatchId id) {
    auto it = watchers_.find(id);
    if (it == watchers_.end()) return {};
    Watcher& w = it->second;
    std::vector<Notification> out;
    for (Revision r = w.next; r <= revision_; ++r) {
      const Notification& n = log_[static_cast<std::size_t>(r - 1)];
      if (n.key.starts_with(w.prefix)) out.push_back(n);
    }
    w.next = revision_ + 1;
    return out;
  }

  LeaseId grant_lease(double ttl, double now) {
    if (!(ttl > 0.0)) throw Error(ErrorCode::InvalidConfig, "lease ttl must be positive");
    advance_clock(now);
    const LeaseId id = ++next_lease_;
    leases_.emplace(id, Lease{id, ttl, now, {}});
    return id;
  }

  // Keep-alive: restarts the lease's ttl window at `now`.
  void keep_alive(LeaseId id, double now) {
    auto it = leases_.find(id);
    if (it == leases_.end()) {
      throw Error(ErrorCode::UnknownLease, "lease " + std::to_string(id) + " does not exist");
    }
    advance_clock(now);
    it->second.granted_at = now;
  }

  // Revokes a lease now, deleting its keys.
  std::vector<std::string> revoke(LeaseId id) {
    auto it = leases_.find(id);
    if (it == leases_.end()) return {};
    std::vector<std::string> keys(it->second.keys.begin(), it->second.keys.end());
    leases_.erase(it);
    for (const auto& k : keys) erase(k);
    return keys;
  }

  bool has_lease(LeaseId id) const { return leases_.count(id) != 0; }

  // Deletes the keys of every lease whose window has passed. Returns the
  // deleted keys in key order.
  std::vector<std::string> expire_leases(double now) {
    advance_clock(now);
    std::vector<LeaseId> expired;
    for (const auto& [id, lease] : leases_) {
      if (now > lease.expires_at()) expired.push_back(id);
    }
    std::vector<std::string> deleted;
    for (LeaseId id : expired) {
      auto keys = revoke(id);
      deleted.insert(deleted.end(), keys.begin(), keys.end());
    }
    std::sort(deleted.begin(), deleted.end());
    return deleted;
  }

  // Full mutation log, index i holding revision i + 1.
  const std::vector<Notification>& log() const noexcept { return log_; }

  nlohmann::json dump() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [k, e] : entries_) {
      nlohmann::json j = {{"key", k}, {"value", e.value}, {"revision", e.revision}};
      if (e.lease) j["lease"] = *e.lease;
      entries.push_back(std::move(j));
    }
    nlohmann::json leases = nlohmann::json::array();
    for (const auto& [id, l] : leases_) {
      leases.push_back({{"id", id}, {"ttl", l.ttl}, {"granted_at", l.granted_at},
                        {"keys", l.keys.size()}});
    }
    return {{"revision", revision_}, {"entries", entries}, {"leases", leases}};
  }

 private:
  struct Watcher {
    std::string prefix;
    Revision next = 1;
  };

  void advance_clock(double now) { now_ = std::max(now_, now); }

  void detach(const std::string& key, LeaseId lease) {
    auto it = leases_.find(lease);
    if (it != leases_.end()) it->second.keys.erase(key);
  }

  std::map<std::string, KvEntry, std::less<>> entries_;
  std::map<LeaseId, Lease> leases_;
  std::map<WatchId, Watcher> watchers_;
  std::vector<Notification> log_;
  Revision revision_ = 0;
  LeaseId next_lease_ = 0;
  WatchId next_watch_ = 0;
  double now_ = 0.0;
};

}  // namespace gangsim
