#include "helm/partition.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <exception>
#include <iostream>
#include <sstream>

#include "helm/error.hpp"

namespace helm {

namespace {

constexpr int kCollectiveTag = -1;
constexpr int kHaloTagBase = 100;

Error transport_error(const std::string& what) {
  return Error(ErrorCode::Transport, "partition", what);
}

}  // namespace

// ---------------------------------------------------------------- Topology

Topology::Topology(int npx, int npy, int npz) : dims_{npx, npy, npz} {
  if (npx < 1 || npy < 1 || npz < 1)
    throw Error(ErrorCode::InvalidValue, "partition", "worker counts per direction must be >= 1");
}

Index3 Topology::coords_of(int rank) const {
  return {rank % dims_[0], (rank / dims_[0]) % dims_[1], rank / (dims_[0] * dims_[1])};
}

std::optional<int> Topology::neighbor(int rank, Face f) const {
  Index3 c = coords_of(rank);
  const int a = face_axis(f);
  c[a] += face_is_high(f) ? 1 : -1;
  if (c[a] < 0 || c[a] >= dims_[a]) return std::nullopt;
  return rank_of(c);
}

std::string Topology::describe() const {
  std::ostringstream os;
  os << dims_[0] << "x" << dims_[1] << "x" << dims_[2];
  return os.str();
}

// ---------------------------------------------------------------- Serial

void SerialFabric::send(int, int, std::vector<cplx>) {
  throw transport_error("serial fabric has no peers to send to");
}

std::vector<cplx> SerialFabric::recv(int, int) {
  throw transport_error("serial fabric has no peers to receive from");
}

std::vector<std::vector<cplx>> SerialFabric::gather(std::vector<cplx> payload, int) {
  std::vector<std::vector<cplx>> out;
  out.push_back(std::move(payload));
  return out;
}

SerialFabric& serial_fabric() {
  static SerialFabric fabric;
  return fabric;
}

Context serial_context(PhaseClock* clock) {
  Context ctx;
  ctx.clock = clock;
  return ctx;
}

// ---------------------------------------------------------------- Mailbox

void Mailbox::push(Message msg) {
  {
    std::lock_guard lock(mutex_);
    queues_[{msg.src, msg.tag}].push_back(std::move(msg));
  }
  cv_.notify_all();
}

Message Mailbox::pop(int src, int tag) {
  std::unique_lock lock(mutex_);
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s_);
  auto& q = queues_[{src, tag}];
  while (q.empty()) {
    if (aborted_) throw Error(ErrorCode::Aborted, "partition", abort_reason_);
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout && q.empty() && !aborted_) {
      std::ostringstream os;
      os << "timed out after " << timeout_s_ << " s waiting for rank " << src << " (tag " << tag
         << "); peers are not executing the same communication sequence";
      throw Error(ErrorCode::Deadlock, "partition", os.str());
    }
  }
  Message m = std::move(q.front());
  q.pop_front();
  return m;
}

void Mailbox::abort(const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    if (!aborted_) {
      aborted_ = true;
      abort_reason_ = reason;
    }
  }
  cv_.notify_all();
}

// ---------------------------------------------------------------- MessageFabric

void MessageFabric::send(int dest, int tag, std::vector<cplx> payload) {
  if (tag < 0) throw transport_error("negative tags are reserved for collectives");
  if (dest < 0 || dest >= size_) throw transport_error("send to invalid rank");
  post(dest, Message{rank_, tag, kP2P, 0, std::move(payload)});
}

std::vector<cplx> MessageFabric::recv(int src, int tag) {
  if (src < 0 || src >= size_) throw transport_error("receive from invalid rank");
  return inbox().pop(src, tag).data;
}

Message MessageFabric::expect(int src, Kind kind, std::uint64_t seq) {
  Message m = inbox().pop(src, kCollectiveTag);
  if (m.kind != kind || m.seq != seq) {
    std::ostringstream os;
    os << "collective mismatch: rank " << rank_ << " is in collective #" << seq << " (kind " << kind
       << ") but rank " << src << " sent collective #" << m.seq << " (kind " << m.kind << ")";
    throw Error(ErrorCode::Deadlock, "partition", os.str());
  }
  return m;
}

std::vector<cplx> MessageFabric::reduce(Kind kind, std::vector<cplx> values) {
  const std::uint64_t seq = ++seq_;
  if (size_ == 1) return values;
  if (rank_ != 0) {
    post(0, Message{rank_, kCollectiveTag, kind, seq, std::move(values)});
    return expect(0, kind, seq).data;
  }
  for (int r = 1; r < size_; ++r) {
    Message m = expect(r, kind, seq);
    if (m.data.size() != values.size())
      throw Error(ErrorCode::Deadlock, "partition", "collective payload length differs between ranks");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (kind == kMax)
        values[i] = cplx(std::max(values[i].real(), m.data[i].real()), 0.0);
      else
        values[i] += m.data[i];
    }
  }
  for (int r = 1; r < size_; ++r) post(r, Message{0, kCollectiveTag, kind, seq, values});
  return values;
}

void MessageFabric::allreduce_sum(std::span<cplx> values) {
  auto out = reduce(kSum, std::vector<cplx>(values.begin(), values.end()));
  std::copy(out.begin(), out.end(), values.begin());
}

double MessageFabric::allreduce_max(double value) {
  return reduce(kMax, std::vector<cplx>{cplx(value, 0.0)})[0].real();
}

void MessageFabric::barrier() { reduce(kBarrier, {}); }

std::vector<std::vector<cplx>> MessageFabric::gather(std::vector<cplx> payload, int root) {
  const std::uint64_t seq = ++seq_;
  std::vector<std::vector<cplx>> out;
  if (rank_ != root) {
    post(root, Message{rank_, kCollectiveTag, kGather, seq, std::move(payload)});
    return out;
  }
  out.resize(static_cast<std::size_t>(size_));
  out[static_cast<std::size_t>(root)] = std::move(payload);
  for (int r = 0; r < size_; ++r)
    if (r != root) out[static_cast<std::size_t>(r)] = expect(r, kGather, seq).data;
  return out;
}

// ---------------------------------------------------------------- In-process

InProcessHub::InProcessHub(int size, double timeout_s) {
  for (int r = 0; r < size; ++r) boxes_.push_back(std::make_unique<Mailbox>(timeout_s));
}

void InProcessHub::abort(const std::string& reason) {
  for (auto& b : boxes_) b->abort(reason);
}

void InProcessFabric::post(int dest, Message msg) { hub_.box(dest).push(std::move(msg)); }

void run_in_process(const Topology& topo, const std::function<void(Context&)>& body,
                    double timeout_s) {
  const int np = topo.size();
  if (np == 1) {
    Context ctx;
    ctx.topology = topo;
    body(ctx);
    return;
  }
  InProcessHub hub(np, timeout_s);
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(np));
  for (int r = 0; r < np; ++r) {
    workers.emplace_back([&, r] {
      InProcessFabric fabric(hub, r);
      Context ctx;
      ctx.topology = topo;
      ctx.fabric = &fabric;
      try {
        body(ctx);
      } catch (const std::exception& e) {
        {
          std::lock_guard lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
        hub.abort("rank " + std::to_string(r) + " failed: " + e.what());
      } catch (...) {
        {
          std::lock_guard lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
        hub.abort("rank " + std::to_string(r) + " failed");
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------- Sockets

namespace {

struct FrameHeader {
  std::int32_t src;
  std::int32_t tag;
  std::uint32_t kind;
  std::uint32_t pad;
  std::uint64_t seq;
  std::uint64_t count;
};

void write_all(int fd, const void* buf, std::size_t len) {
  const char* p = static_cast<const char*>(buf);
  while (len > 0) {
    const ssize_t w = ::send(fd, p, len, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw transport_error(std::string("socket write failed: ") + std::strerror(errno));
    }
    p += w;
    len -= static_cast<std::size_t>(w);
  }
}

// Returns false on orderly EOF before any byte was read.
bool read_all(int fd, void* buf, std::size_t len) {
  char* p = static_cast<char*>(buf);
  std::size_t got = 0;
  while (got < len) {
    const ssize_t r = ::recv(fd, p + got, len - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw transport_error("peer closed connection mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw transport_error(std::string("socket read failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

sockaddr_in loopback(int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

SocketFabric::SocketFabric(int rank, int size, int port_base, double timeout_s)
    : MessageFabric(rank, size), inbox_(timeout_s), sockets_(static_cast<std::size_t>(size), -1) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw transport_error("cannot create listening socket");
  int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = loopback(port_base + rank);
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
      ::listen(listener, size) < 0) {
    ::close(listener);
    throw transport_error("cannot listen on port " + std::to_string(port_base + rank) + ": " +
                          std::strerror(errno));
  }

  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
  for (int peer = 0; peer < rank; ++peer) {
    for (;;) {
      const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      sockaddr_in target = loopback(port_base + peer);
      if (::connect(fd, reinterpret_cast<sockaddr*>(&target), sizeof(target)) == 0) {
        const std::int32_t me = rank;
        write_all(fd, &me, sizeof(me));
        set_nodelay(fd);
        sockets_[static_cast<std::size_t>(peer)] = fd;
        break;
      }
      ::close(fd);
      if (std::chrono::steady_clock::now() > deadline) {
        ::close(listener);
        throw transport_error("rank " + std::to_string(rank) + " could not connect to rank " +
                              std::to_string(peer));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
  for (int accepted = 0; accepted < size - 1 - rank; ++accepted) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) {
      ::close(listener);
      throw transport_error("accept failed");
    }
    std::int32_t peer = -1;
    if (!read_all(fd, &peer, sizeof(peer)) || peer <= rank || peer >= size) {
      ::close(listener);
      throw transport_error("bad handshake on incoming connection");
    }
    set_nodelay(fd);
    sockets_[static_cast<std::size_t>(peer)] = fd;
  }
  ::close(listener);

  for (int peer = 0; peer < size; ++peer)
    if (peer != rank) readers_.emplace_back([this, peer] { reader_loop(peer); });
}

SocketFabric::~SocketFabric() {
  closing_ = true;
  for (int fd : sockets_)
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
  for (auto& t : readers_) t.join();
  for (int fd : sockets_)
    if (fd >= 0) ::close(fd);
}

void SocketFabric::reader_loop(int peer) {
  const int fd = sockets_[static_cast<std::size_t>(peer)];
  try {
    for (;;) {
      FrameHeader h{};
      if (!read_all(fd, &h, sizeof(h))) return;
      Message m{h.src, h.tag, h.kind, h.seq, std::vector<cplx>(h.count)};
      if (h.count > 0 && !read_all(fd, m.data.data(), h.count * sizeof(cplx)))
        throw transport_error("peer closed connection mid-frame");
      inbox_.push(std::move(m));
    }
  } catch (const std::exception& e) {
    if (!closing_) inbox_.abort(std::string("link to rank ") + std::to_string(peer) + ": " + e.what());
  }
}

void SocketFabric::post(int dest, Message msg) {
  if (dest == rank()) {
    inbox_.push(std::move(msg));
    return;
  }
  const int fd = sockets_[static_cast<std::size_t>(dest)];
  FrameHeader h{msg.src, msg.tag, msg.kind, 0, msg.seq, msg.data.size()};
  write_all(fd, &h, sizeof(h));
  if (!msg.data.empty()) write_all(fd, msg.data.data(), msg.data.size() * sizeof(cplx));
}

std::vector<int> run_processes(const Topology& topo, int port_base,
                               const std::function<int(Context&)>& body, double timeout_s) {
  const int np = topo.size();
  std::cout.flush();
  std::cerr.flush();
  std::vector<pid_t> pids;
  for (int r = 0; r < np; ++r) {
    const pid_t pid = ::fork();
    if (pid < 0) throw transport_error("fork failed");
    if (pid == 0) {
      int code = 70;
      try {
        SocketFabric fabric(r, np, port_base, timeout_s);
        Context ctx;
        ctx.topology = topo;
        ctx.fabric = &fabric;
        code = body(ctx);
        fabric.barrier();
      } catch (const std::exception& e) {
        std::cerr << "rank " << r << ": " << e.what() << std::endl;
        code = 70;
      }
      std::cout.flush();
      std::cerr.flush();
      ::_exit(code);
    }
    pids.push_back(pid);
  }
  std::vector<int> codes;
  for (pid_t pid : pids) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (WIFEXITED(status))
      codes.push_back(WEXITSTATUS(status));
    else if (WIFSIGNALED(status))
      codes.push_back(128 + WTERMSIG(status));
    else
      codes.push_back(-1);
  }
  return codes;
}

// ---------------------------------------------------------------- Partitioning

std::vector<BlockExtent> partition_grid(const Grid3& grid, const Topology& topo) {
  const Index3& p = topo.dims();
  for (int a = 0; a < 3; ++a) {
    if (grid.n[a] < p[a]) {
      std::ostringstream os;
      os << "direction " << a + 1 << " has " << grid.n[a] << " vertices but " << p[a] << " workers";
      throw Error(ErrorCode::LevelIncompatible, "partition", os.str());
    }
  }
  // 1D splits: the first (n % p) parts take one extra vertex.
  std::array<std::vector<std::pair<int, int>>, 3> ranges;
  for (int a = 0; a < 3; ++a) {
    const int base = grid.n[a] / p[a];
    const int extra = grid.n[a] % p[a];
    int lo = 1;
    for (int q = 0; q < p[a]; ++q) {
      const int len = base + (q < extra ? 1 : 0);
      ranges[a].emplace_back(lo, lo + len - 1);
      lo += len;
    }
  }
  std::vector<BlockExtent> out(static_cast<std::size_t>(topo.size()));
  for (int r = 0; r < topo.size(); ++r) {
    const Index3 c = topo.coords_of(r);
    BlockExtent& e = out[static_cast<std::size_t>(r)];
    e.global = grid.n;
    for (int a = 0; a < 3; ++a) {
      e.lo[a] = ranges[a][static_cast<std::size_t>(c[a])].first;
      e.hi[a] = ranges[a][static_cast<std::size_t>(c[a])].second;
    }
  }
  return out;
}

BlockExtent coarsen_extent(const BlockExtent& fine, const Grid3& coarse) {
  BlockExtent c;
  c.global = coarse.n;
  for (int a = 0; a < 3; ++a) {
    // coarse i owns fine 2i-1: lo_f <= 2i-1 <= hi_f
    c.lo[a] = (fine.lo[a] + 2) / 2;
    c.hi[a] = (fine.hi[a] + 1) / 2;
  }
  return c;
}

std::vector<BlockExtent> coarsen_partition(const std::vector<BlockExtent>& fine, const Grid3& coarse) {
  std::vector<BlockExtent> out;
  out.reserve(fine.size());
  for (std::size_t r = 0; r < fine.size(); ++r) {
    out.push_back(coarsen_extent(fine[r], coarse));
    if (out.back().empty()) {
      std::ostringstream os;
      os << "rank " << r << " owns no vertices on the " << coarse.n[0] << "x" << coarse.n[1] << "x"
         << coarse.n[2] << " level; use fewer workers or a larger grid";
      throw Error(ErrorCode::LevelIncompatible, "partition", os.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------- Exchange

namespace {

// Owned plane adjacent to `f` (layer = 1 or n) or ghost plane (0 or n+1).
// Axes listed in `with_ghosts` also cover their ghost layers.
template <typename Fn>
void for_plane(const HaloField& u, Face f, int layer, std::array<bool, 3> with_ghosts, Fn&& fn) {
  const int a = face_axis(f);
  const Index3 n{u.nx(), u.ny(), u.nz()};
  const int lb = a == 0 ? 1 : 0;
  const int lc = a == 2 ? 1 : 2;
  const int b0 = with_ghosts[lb] ? 0 : 1;
  const int b1 = with_ghosts[lb] ? n[lb] + 1 : n[lb];
  const int c0 = with_ghosts[lc] ? 0 : 1;
  const int c1 = with_ghosts[lc] ? n[lc] + 1 : n[lc];
  for (int q = c0; q <= c1; ++q)
    for (int p = b0; p <= b1; ++p) {
      Index3 idx{};
      idx[a] = layer;
      idx[lb] = p;
      idx[lc] = q;
      fn(u.index(idx[0], idx[1], idx[2]));
    }
}

}  // namespace

void halo_exchange(HaloField& field, const Context& ctx, HaloScope scope) {
  ScopedPhase timer(ctx.clock, phase::kHalo);
  Fabric& fabric = *ctx.fabric;
  if (fabric.size() == 1) {
    field.mark_halo_valid();
    return;
  }
  const int me = fabric.rank();
  auto data = field.raw();
  // Axis by axis; in full scope each plane carries the ghosts of the axes
  // already exchanged, which fills edge and corner ghosts.
  for (int a = 0; a < 3; ++a) {
    std::array<bool, 3> with_ghosts{};
    if (scope == HaloScope::Full)
      for (int b = 0; b < a; ++b) with_ghosts[static_cast<std::size_t>(b)] = true;
    const Face faces[2] = {static_cast<Face>(2 * a), static_cast<Face>(2 * a + 1)};
    for (Face f : faces) {
      const auto peer = ctx.topology.neighbor(me, f);
      if (!peer) continue;
      const int layer = face_is_high(f) ? field.extent().count(a) : 1;
      std::vector<cplx> plane;
      for_plane(field, f, layer, with_ghosts, [&](std::size_t i) { plane.push_back(data[i]); });
      fabric.send(*peer, kHaloTagBase + static_cast<int>(f), std::move(plane));
    }
    for (Face f : faces) {
      const auto peer = ctx.topology.neighbor(me, f);
      if (!peer) continue;
      std::vector<cplx> plane;
      try {
        plane = fabric.recv(*peer, kHaloTagBase + static_cast<int>(opposite(f)));
      } catch (const Error& e) {
        throw Error(e.code(), "partition",
                    std::string("halo exchange on face ") + face_name(f) + ": " + e.what());
      }
      const int layer = face_is_high(f) ? field.extent().count(a) + 1 : 0;
      std::size_t p = 0;
      bool ok = true;
      for_plane(field, f, layer, with_ghosts, [&](std::size_t i) {
        if (p < plane.size())
          data[i] = plane[p++];
        else
          ok = false;
      });
      if (!ok || p != plane.size())
        throw Error(ErrorCode::ShapeMismatch, "partition",
                    std::string("halo plane size mismatch on face ") + face_name(f));
    }
  }
  field.mark_halo_valid();
}

cplx allreduce(cplx partial, Fabric& fabric) { return fabric.allreduce_sum(partial); }

HaloField gather_field(const HaloField& local, const std::vector<BlockExtent>& extents,
                       Fabric& fabric, int root) {
  auto parts = fabric.gather(local.owned_values(), root);
  if (fabric.rank() != root) return {};
  const Index3 n = local.extent().global;
  HaloField global(BlockExtent{{1, 1, 1}, n, n});
  for (std::size_t r = 0; r < parts.size(); ++r) {
    const BlockExtent& e = extents[r];
    if (parts[r].size() != e.num_owned())
      throw Error(ErrorCode::ShapeMismatch, "partition", "gathered block has the wrong size");
    std::size_t p = 0;
    for (int k = e.lo[2]; k <= e.hi[2]; ++k)
      for (int j = e.lo[1]; j <= e.hi[1]; ++j)
        for (int i = e.lo[0]; i <= e.hi[0]; ++i) global(i, j, k) = parts[r][p++];
  }
  return global;
}

HaloField extract_block(const HaloField& global, const BlockExtent& block) {
  HaloField local(block);
  for (int k = 1; k <= local.nz(); ++k)
    for (int j = 1; j <= local.ny(); ++j)
      for (int i = 1; i <= local.nx(); ++i) {
        const Index3 g = block.local_to_global({i, j, k});
        local(i, j, k) = global(g[0], g[1], g[2]);
      }
  local.invalidate_halo();
  return local;
}

}  // namespace helm
