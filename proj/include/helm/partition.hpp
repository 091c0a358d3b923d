#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "helm/grid.hpp"
#include "helm/timing.hpp"

namespace helm {

/// Cartesian worker layout. Ranks follow x-line lexicographic order:
/// rank = px + py*npx + pz*npx*npy.
class Topology {
 public:
  Topology() = default;
  Topology(int npx, int npy, int npz);

  const Index3& dims() const { return dims_; }
  int size() const { return dims_[0] * dims_[1] * dims_[2]; }

  int rank_of(const Index3& coords) const {
    return coords[0] + coords[1] * dims_[0] + coords[2] * dims_[0] * dims_[1];
  }
  Index3 coords_of(int rank) const;

  /// Neighbouring rank across a face, or none at the physical boundary.
  std::optional<int> neighbor(int rank, Face f) const;

  std::string describe() const;

 private:
  Index3 dims_{1, 1, 1};
};

/// Point-to-point and collective primitives for one SPMD worker.
/// Messages between a fixed pair of workers with the same tag are delivered
/// in order; collectives return bitwise identical values on every worker.
class Fabric {
 public:
  virtual ~Fabric() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;
  virtual std::string name() const = 0;

  virtual void send(int dest, int tag, std::vector<cplx> payload) = 0;
  virtual std::vector<cplx> recv(int src, int tag) = 0;

  /// Elementwise sum across workers, accumulated in rank order.
  virtual void allreduce_sum(std::span<cplx> values) = 0;
  virtual double allreduce_max(double value) = 0;
  virtual void barrier() = 0;
  /// Root receives every worker's payload (index = rank); others get {}.
  virtual std::vector<std::vector<cplx>> gather(std::vector<cplx> payload, int root) = 0;

  cplx allreduce_sum(cplx value) {
    allreduce_sum(std::span<cplx>(&value, 1));
    return value;
  }
};

/// One-worker fabric: collectives are the identity.
class SerialFabric final : public Fabric {
 public:
  int rank() const override { return 0; }
  int size() const override { return 1; }
  std::string name() const override { return "serial"; }
  void send(int dest, int tag, std::vector<cplx> payload) override;
  std::vector<cplx> recv(int src, int tag) override;
  void allreduce_sum(std::span<cplx>) override {}
  double allreduce_max(double value) override { return value; }
  void barrier() override {}
  std::vector<std::vector<cplx>> gather(std::vector<cplx> payload, int root) override;
};

SerialFabric& serial_fabric();

struct Message {
  int src = 0;
  int tag = 0;
  std::uint32_t kind = 0;
  std::uint64_t seq = 0;
  std::vector<cplx> data;
};

/// Per-worker inbox keyed by (source, tag). Waits give up after `timeout`
/// seconds with a deadlock error; `abort` wakes every waiter.
class Mailbox {
 public:
  explicit Mailbox(double timeout_s = 600.0) : timeout_s_(timeout_s) {}

  void push(Message msg);
  Message pop(int src, int tag);
  void abort(const std::string& reason);
  void set_timeout(double seconds) { timeout_s_ = seconds; }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::pair<int, int>, std::deque<Message>> queues_;
  bool aborted_ = false;
  std::string abort_reason_;
  double timeout_s_;
};

/// Collectives built from point-to-point messages through rank 0. Each
/// collective carries a sequence number and kind; a worker that enters a
/// different collective than its peers is reported instead of hanging.
class MessageFabric : public Fabric {
 public:
  MessageFabric(int rank, int size) : rank_(rank), size_(size) {}

  int rank() const override { return rank_; }
  int size() const override { return size_; }

  void send(int dest, int tag, std::vector<cplx> payload) override;
  std::vector<cplx> recv(int src, int tag) override;
  void allreduce_sum(std::span<cplx> values) override;
  double allreduce_max(double value) override;
  void barrier() override;
  std::vector<std::vector<cplx>> gather(std::vector<cplx> payload, int root) override;

 protected:
  virtual void post(int dest, Message msg) = 0;
  virtual Mailbox& inbox() = 0;

 private:
  enum Kind : std::uint32_t { kP2P = 0, kSum = 1, kMax = 2, kBarrier = 3, kGather = 4 };

  std::vector<cplx> reduce(Kind kind, std::vector<cplx> values);
  Message expect(int src, Kind kind, std::uint64_t seq);

  int rank_;
  int size_;
  std::uint64_t seq_ = 0;
};

/// Shared state for in-process workers.
class InProcessHub {
 public:
  explicit InProcessHub(int size, double timeout_s = 600.0);
  int size() const { return static_cast<int>(boxes_.size()); }
  Mailbox& box(int rank) { return *boxes_[static_cast<std::size_t>(rank)]; }
  void abort(const std::string& reason);

 private:
  std::vector<std::unique_ptr<Mailbox>> boxes_;
};

class InProcessFabric final : public MessageFabric {
 public:
  InProcessFabric(InProcessHub& hub, int rank) : MessageFabric(rank, hub.size()), hub_(hub) {}
  std::string name() const override { return "inproc"; }

 protected:
  void post(int dest, Message msg) override;
  Mailbox& inbox() override { return hub_.box(rank()); }

 private:
  InProcessHub& hub_;
};

/// Worker process connected to its peers over loopback TCP. Rank r listens on
/// port_base + r; a reader thread per peer drains frames into the inbox so
/// sends never block on the receiver.
class SocketFabric final : public MessageFabric {
 public:
  SocketFabric(int rank, int size, int port_base, double timeout_s = 600.0);
  ~SocketFabric() override;
  SocketFabric(const SocketFabric&) = delete;
  SocketFabric& operator=(const SocketFabric&) = delete;

  std::string name() const override { return "socket"; }

 protected:
  void post(int dest, Message msg) override;
  Mailbox& inbox() override { return inbox_; }

 private:
  void reader_loop(int peer);

  Mailbox inbox_;
  std::vector<int> sockets_;
  std::vector<std::thread> readers_;
  std::atomic<bool> closing_{false};
};

/// Everything a worker needs to run collective kernels.
struct Context {
  Topology topology;
  Fabric* fabric = &serial_fabric();
  PhaseClock* clock = nullptr;

  int rank() const { return fabric->rank(); }
  int size() const { return fabric->size(); }
};

Context serial_context(PhaseClock* clock = nullptr);

/// Runs `body` once per rank on threads sharing an in-process hub. The first
/// exception aborts the hub (waking blocked peers) and is rethrown.
void run_in_process(const Topology& topo, const std::function<void(Context&)>& body,
                    double timeout_s = 600.0);

/// Forks one process per rank, connected through SocketFabric. Each child
/// runs `body` and exits with its return value; returns the exit codes.
std::vector<int> run_processes(const Topology& topo, int port_base,
                               const std::function<int(Context&)>& body,
                               double timeout_s = 600.0);

/// Balanced contiguous split of each direction (sizes differ by at most one).
std::vector<BlockExtent> partition_grid(const Grid3& grid, const Topology& topo);

/// Block of the coarse grid induced by a fine block: it owns the coarse
/// vertices whose fine counterpart (2i-1) lies in the fine block.
BlockExtent coarsen_extent(const BlockExtent& fine, const Grid3& coarse);

/// Induced partition of a coarse level; every block must stay non-empty.
std::vector<BlockExtent> coarsen_partition(const std::vector<BlockExtent>& fine, const Grid3& coarse);

enum class HaloScope {
  Faces,  ///< face ghosts only; enough for the 7-point stencil
  Full,   ///< face, edge and corner ghosts; needed by the grid transfers
};

/// Copies boundary planes to face neighbours and fills the receiving ghost
/// planes. Edge and corner ghosts are only filled in full scope.
void halo_exchange(HaloField& field, const Context& ctx, HaloScope scope = HaloScope::Faces);

cplx allreduce(cplx partial, Fabric& fabric);

/// Collects every block on `root`; other workers receive an empty field.
HaloField gather_field(const HaloField& local, const std::vector<BlockExtent>& extents,
                       Fabric& fabric, int root = 0);

/// Copies the owned region of `block` out of a whole-grid field.
HaloField extract_block(const HaloField& global, const BlockExtent& block);

}  // namespace helm
