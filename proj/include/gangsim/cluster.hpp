#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gangsim/error.hpp"
#include "gangsim/resources.hpp"

namespace gangsim {

enum class NodeStatus { Ready, NotReady, Cordoned };

inline std::string_view to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::Ready: return "Ready";
    case NodeStatus::NotReady: return "NotReady";
    case NodeStatus::Cordoned: return "Cordoned";
  }
  return "?";
}

// Position of a node in its cluster. Ordering between nodes (tie-breaks in
// ranking, deterministic iteration) always follows topology order.
using NodeIndex = std::size_t;

// One learner pod of a gang.
struct PodKey {
  std::string gang_id;
  int learner = 0;

  friend auto operator<=>(const PodKey&, const PodKey&) = default;
  friend bool operator==(const PodKey&, const PodKey&) = default;
};

struct PodRecord {
  PodKey pod;
  ResourceVector demand;
};

// Capacity held on a node for a gang member that is not yet materialized.
struct Reservation {
  PodKey pod;
  ResourceVector demand;
};

struct PodPlacement {
  PodKey pod;
  NodeIndex node = 0;
  ResourceVector demand;
};

struct NodeFailure {
  NodeIndex node = 0;
  std::vector<PodPlacement> evicted;
  std::vector<PodPlacement> dropped_reservations;
};

class Node {
 public:
  Node(std::string id, ResourceVector capacity)
      : id_(std::move(id)), capacity_(std::move(capacity)) {
    allocated_.gpu_class = capacity_.gpu_class;
  }

  const std::string& id() const noexcept { return id_; }
  const GpuClass& gpu_class() const noexcept { return capacity_.gpu_class; }
  const ResourceVector& capacity() const noexcept { return capacity_; }
  const ResourceVector& allocated() const noexcept { return allocated_; }
  NodeStatus status() const noexcept { return status_; }
  const std::vector<Reservation>& reservations() const noexcept { return reservations_; }
  const std::vector<PodRecord>& pods() const noexcept { return pods_; }

  ResourceVector reserved() const {
    ResourceVector total;
    total.gpu_class = capacity_.gpu_class;
    for (const auto& r : reservations_) total += r.demand;
    return total;
  }

  // Capacity minus allocations minus every reservation.
  ResourceVector free() const { return capacity_ - allocated_ - reserved(); }

  // Reserved capacity belonging to one gang.
  ResourceVector reserved_by(std::string_view gang_id) const {
    ResourceVector total;
    for (const auto& r : reservations_) {
      if (r.pod.gang_id == gang_id) total += r.demand;
    }
    return total;
  }

  std::int64_t held_gpus() const { return allocated_.gpus + reserved().gpus; }

  bool has_pod(const PodKey& pod) const {
    return std::any_of(pods_.begin(), pods_.end(),
                       [&](const PodRecord& p) { return p.pod == pod; });
  }

  bool has_reservation(const PodKey& pod) const {
    return std::any_of(reservations_.begin(), reservations_.end(),
                       [&](const Reservation& r) { return r.pod == pod; });
  }

 private:
  friend class Cluster;

  std::string id_;
  ResourceVector capacity_;
  ResourceVector allocated_;
  NodeStatus status_ = NodeStatus::Ready;
  std::vector<Reservation> reservations_;
  std::vector<PodRecord> pods_;
};

// True when a pod demand may run on a node of the given class. CPU-only
// demands run anywhere; a GPU demand without a class accepts any GPU model.
inline bool class_matches(const ResourceVector& demand, const GpuClass& node_class) {
  if (demand.gpus == 0 || demand.gpu_class.empty()) return true;
  return demand.gpu_class == node_class;
}

// The physical cluster. All mutation goes through allocate/release/reserve
// and the health transitions, each of which keeps
// allocated + reserved <= capacity on every node.
class Cluster {
 public:
  Cluster() = default;

  NodeIndex add_node(std::string id, ResourceVector capacity) {
    if (id.empty()) throw Error(ErrorCode::ValidationError, "node id must not be empty");
    if (!capacity.non_negative()) {
      throw Error(ErrorCode::ValidationError, "node '" + id + "' has negative capacity");
    }
    if (index_.count(id) != 0) {
      throw Error(ErrorCode::ValidationError, "duplicate node id '" + id + "'");
    }
    const NodeIndex idx = nodes_.size();
    index_.emplace(id, idx);
    nodes_.emplace_back(std::move(id), std::move(capacity));
    return idx;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(NodeIndex i) const { return nodes_.at(i); }

  std::optional<NodeIndex> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  NodeIndex index_of(std::string_view id) const {
    if (auto i = find(id)) return *i;
    throw Error(ErrorCode::UnknownNode, "no node with id '" + std::string(id) + "'");
  }

  // Places a pod. Any reservation the pod's gang holds on this node is
  // converted into the allocation rather than counted twice.
  void allocate(NodeIndex n, const ResourceVector& demand, const PodKey& pod) {
    Node& node = at(n);
    check_placeable(node, demand);
    const ResourceVector consumed = matching_reservation(node, demand, pod);
    const ResourceVector others = node.reserved() - consumed;
    if (!(node.allocated_ + demand + others).fits_within(node.capacity_)) {
      throw Error(ErrorCode::InsufficientCapacity,
                  "node '" + node.id_ + "' cannot fit demand for " + describe(pod));
    }
    consume_reservation(node, consumed, pod);
    node.allocated_ += demand;
    node.pods_.push_back(PodRecord{pod, demand});
  }

  void release(NodeIndex n, const ResourceVector& demand, const PodKey& pod) {
    Node& node = at(n);
    auto it = std::find_if(node.pods_.begin(), node.pods_.end(), [&](const PodRecord& p) {
      return p.pod == pod && p.demand.same_amounts(demand);
    });
    if (it == node.pods_.end() || !demand.fits_within(node.allocated_)) {
      throw Error(ErrorCode::UnderflowRelease,
                  "node '" + node.id_ + "' holds no such allocation for " + describe(pod));
    }
    node.allocated_ -= demand;
    node.pods_.erase(it);
  }

  // Releases the pod wherever it runs. Returns the node it was on.
  std::optional<NodeIndex> release_pod(const PodKey& pod) {
    for (NodeIndex n = 0; n < nodes_.size(); ++n) {
      const auto& pods = nodes_[n].pods_;
      auto it = std::find_if(pods.begin(), pods.end(),
                             [&](const PodRecord& p) { return p.pod == pod; });
      if (it != pods.end()) {
        release(n, ResourceVector(it->demand), pod);
        return n;
      }
    }
    return std::nullopt;
  }

  void reserve(NodeIndex n, const ResourceVector& demand, const PodKey& pod) {
    Node& node = at(n);
    check_placeable(node, demand);
    if (!(node.allocated_ + node.reserved() + demand).fits_within(node.capacity_)) {
      throw Error(ErrorCode::InsufficientCapacity,
                  "node '" + node.id_ + "' cannot reserve for " + describe(pod));
    }
    node.reservations_.push_back(Reservation{pod, demand});
  }

  // Drops a single pod's reservation. Returns whether one existed.
  bool cancel_reservation(const PodKey& pod) {
    for (auto& node : nodes_) {
      auto it = std::find_if(node.reservations_.begin(), node.reservations_.end(),
                             [&](const Reservation& r) { return r.pod == pod; });
      if (it != node.reservations_.end()) {
        node.reservations_.erase(it);
        return true;
      }
    }
    return false;
  }

  // Drops every reservation of a gang. Returns the number dropped.
  std::size_t cancel_gang_reservations(std::string_view gang_id) {
    std::size_t dropped = 0;
    for (auto& node : nodes_) {
      const auto before = node.reservations_.size();
      std::erase_if(node.reservations_,
                    [&](const Reservation& r) { return r.pod.gang_id == gang_id; });
      dropped += before - node.reservations_.size();
    }
    return dropped;
  }

  // No new placements; running pods are left alone.
  void cordon(NodeIndex n) {
    Node& node = at(n);
    if (node.status_ == NodeStatus::Ready) node.status_ = NodeStatus::Cordoned;
  }

  // Marks the node NotReady and evicts everything on it. Failing a node that
  // is already down returns empty lists.
  NodeFailure fail(NodeIndex n) {
    Node& node = at(n);
    NodeFailure out;
    out.node = n;
    node.status_ = NodeStatus::NotReady;
    for (auto& p : node.pods_) out.evicted.push_back(PodPlacement{p.pod, n, p.demand});
    for (auto& r : node.reservations_) {
      out.dropped_reservations.push_back(PodPlacement{r.pod, n, r.demand});
    }
    node.pods_.clear();
    node.reservations_.clear();
    node.allocated_ = ResourceVector{};
    node.allocated_.gpu_class = node.capacity_.gpu_class;
    return out;
  }

  void recover(NodeIndex n) { at(n).status_ = NodeStatus::Ready; }

  std::int64_t total_gpus() const {
    std::int64_t total = 0;
    for (const auto& n : nodes_) total += n.capacity_.gpus;
    return total;
  }

  std::int64_t allocated_gpus() const {
    std::int64_t total = 0;
    for (const auto& n : nodes_) total += n.allocated_.gpus;
    return total;
  }

  std::int64_t held_gpus() const {
    std::int64_t total = 0;
    for (const auto& n : nodes_) total += n.held_gpus();
    return total;
  }

  std::size_t pod_count() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) total += n.pods_.size();
    return total;
  }

  std::size_t reservation_count() const {
    std::size_t total = 0;
    for (const auto& n : nodes_) total += n.reservations_.size();
    return total;
  }

  std::vector<PodPlacement> pods_of(std::string_view gang_id) const {
    std::vector<PodPlacement> out;
    for (NodeIndex n = 0; n < nodes_.size(); ++n) {
      for (const auto& p : nodes_[n].pods_) {
        if (p.pod.gang_id == gang_id) out.push_back(PodPlacement{p.pod, n, p.demand});
      }
    }
    return out;
  }

  std::vector<PodPlacement> reservations_of(std::string_view gang_id) const {
    std::vector<PodPlacement> out;
    for (NodeIndex n = 0; n < nodes_.size(); ++n) {
      for (const auto& r : nodes_[n].reservations_) {
        if (r.pod.gang_id == gang_id) out.push_back(PodPlacement{r.pod, n, r.demand});
      }
    }
    return out;
  }

  // Throws InvariantViolation if bookkeeping is inconsistent.
  void check_invariants() const {
    for (const auto& n : nodes_) {
      ResourceVector sum;
      for (const auto& p : n.pods_) sum += p.demand;
      if (!sum.same_amounts(n.allocated_)) {
        throw Error(ErrorCode::InvariantViolation,
                    "node '" + n.id_ + "' pod records disagree with allocation");
      }
      if (!(n.allocated_ + n.reserved()).fits_within(n.capacity_)) {
        throw Error(ErrorCode::InvariantViolation, "node '" + n.id_ + "' is overcommitted");
      }
      if (n.status_ == NodeStatus::NotReady && !n.pods_.empty()) {
        throw Error(ErrorCode::InvariantViolation,
                    "NotReady node '" + n.id_ + "' still runs pods");
      }
    }
  }

 private:
  Node& at(NodeIndex n) {
    if (n >= nodes_.size()) {
      throw Error(ErrorCode::UnknownNode, "node index " + std::to_string(n) + " out of range");
    }
    return nodes_[n];
  }

  static std::string describe(const PodKey& pod) {
    return pod.gang_id + "/" + std::to_string(pod.learner);
  }

  static void check_placeable(const Node& node, const ResourceVector& demand) {
    if (node.status_ != NodeStatus::Ready) {
      throw Error(ErrorCode::NodeUnschedulable,
                  "node '" + node.id_ + "' is " + std::string(to_string(node.status_)));
    }
    if (!class_matches(demand, node.gpu_class())) {
      throw Error(ErrorCode::GpuClassMismatch, "node '" + node.id_ + "' is " +
                                                   node.gpu_class().name() + ", demand wants " +
                                                   demand.gpu_class.name());
    }
  }

  // How much of the demand is already covered by this gang's reservations on
  // the node. The pod's own reservation is preferred.
  static ResourceVector matching_reservation(const Node& node, const ResourceVector& demand,
                                             const PodKey& pod) {
    ResourceVector covered;
    ResourceVector want = demand;
    auto take = [&](const Reservation& r) {
      ResourceVector part = r.demand.min_with(want);
      covered += part;
      want -= part;
    };
    for (const auto& r : node.reservations_) {
      if (r.pod == pod) take(r);
    }
    for (const auto& r : node.reservations_) {
      if (r.pod.gang_id == pod.gang_id && r.pod != pod && !want.is_zero()) take(r);
    }
    return covered;
  }

  static void consume_reservation(Node& node, ResourceVector amount, const PodKey& pod) {
    auto eat = [&](bool own) {
      for (auto& r : node.reservations_) {
        if (amount.is_zero()) return;
        const bool mine = r.pod == pod;
        if (own != mine || r.pod.gang_id != pod.gang_id) continue;
        ResourceVector part = r.demand.min_with(amount);
        r.demand -= part;
        amount -= part;
      }
    };
    eat(true);
    eat(false);
    std::erase_if(node.reservations_, [](const Reservation& r) { return r.demand.is_zero(); });
  }

  std::vector<Node> nodes_;
  std::map<std::string, NodeIndex, std::less<>> index_;
};

// Topology file: a JSON list of {id, gpu_class, gpus, cpu_millicores, mem_mb}.
// An object with a "nodes" member holding that list is also accepted.
inline Cluster cluster_from_json(const nlohmann::json& doc) {
  const nlohmann::json& list = doc.is_object() && doc.contains("nodes") ? doc.at("nodes") : doc;
  if (!list.is_array()) {
    throw Error(ErrorCode::ValidationError, "topology must be a list of nodes");
  }
  Cluster cluster;
  try {
    for (const auto& entry : list) {
      ResourceVector cap;
      cap.gpus = entry.value("gpus", std::int64_t{0});
      cap.gpu_class = GpuClass(entry.value("gpu_class", std::string{}));
      cap.cpu_millis = entry.value("cpu_millicores", std::int64_t{0});
      cap.mem_mb = entry.value("mem_mb", std::int64_t{0});
      if (cap.gpus > 0 && cap.gpu_class.empty()) {
        throw Error(ErrorCode::ValidationError,
                    "node '" + entry.at("id").get<std::string>() + "' has GPUs but no gpu_class");
      }
      cluster.add_node(entry.at("id").get<std::string>(), std::move(cap));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ValidationError, std::string("bad topology entry: ") + e.what());
  }
  return cluster;
}

inline nlohmann::json cluster_to_json(const Cluster& cluster) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& n : cluster.nodes()) {
    list.push_back({{"id", n.id()},
                    {"gpu_class", n.gpu_class().name()},
                    {"gpus", n.capacity().gpus},
                    {"cpu_millicores", n.capacity().cpu_millis},
                    {"mem_mb", n.capacity().mem_mb}});
  }
  return list;
}

inline Cluster load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open topology file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "topology file '" + path + "': " + e.what());
  }
  return cluster_from_json(doc);
}

// Default per-node CPU and memory for a GPU class, sized so four single-GPU
// learners with recommended resources fit on a 4-GPU node.
inline ResourceVector default_node_capacity(const GpuClass& cls, std::int64_t gpus) {
  std::int64_t cores = 32;
  if (cls == GpuClass::V100()) cores = 112;
  return ResourceVector{gpus, cls, cores * 1000, 256 * 1024};
}

// n identical nodes named <prefix>0 .. <prefix>(n-1).
inline Cluster uniform_cluster(std::size_t n, const GpuClass& cls, std::int64_t gpus_per_node,
                               std::string_view prefix = "n") {
  Cluster cluster;
  for (std::size_t i = 0; i < n; ++i) {
    cluster.add_node(std::string(prefix) + std::to_string(i), default_node_capacity(cls, gpus_per_node));
  }
  return cluster;
}

}  // namespace gangsim
