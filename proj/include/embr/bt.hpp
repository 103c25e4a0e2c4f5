#pragma once

// Behavior-tree engine driving each robot's mission.
//
// A tree is a value type (BtNode) describing control flow; all execution
// state lives in a TreeRunner, which owns one TaskHandle per leaf and a small
// per-node memory block. Ticking traverses the tree top-down once and returns
// SUCCESS, FAILURE, or RUNNING.
//
// Semantics:
//   - Sequence ticks children left to right, returning FAILURE/RUNNING on the
//     first child that fails/runs and SUCCESS once all succeed. Fallback is
//     the exact dual. Both keep memory: the next tick resumes at the running
//     child instead of re-ticking finished siblings.
//   - Parallel(threshold) ticks every unfinished child each tick. It succeeds
//     as soon as `threshold` children have succeeded and fails as soon as any
//     child fails; either way the remaining running children are halted.
//   - Inverter swaps SUCCESS and FAILURE. ForceSuccess turns FAILURE into
//     SUCCESS. Retry(n) re-runs a failing child within the same tick, at most
//     n attempts in a row. Timeout(t) fails (and halts) a child still running
//     after t ticks.
//   - Leaf starts its task when entered, then polls it; a leaf re-ticked
//     while RUNNING never restarts the task. When an ancestor abandons a
//     running leaf, the task receives a cancel signal.
//
// Malformed trees (wrong arity, bad arguments) are rejected when a runner is
// constructed or a description is parsed, never at tick time. Trees can be
// loaded from text (`Kind ['(' args ')'] ['{' children '}']`) and serialized
// back; parse errors carry the offending line number.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "embr/geometry.hpp"

namespace embr {

enum class Status { Success, Failure, Running };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Success: return "SUCCESS";
    case Status::Failure: return "FAILURE";
    default: return "RUNNING";
  }
}

enum class NodeKind {
  Sequence,
  Fallback,
  Parallel,
  Inverter,
  ForceSuccess,
  Retry,
  Timeout,
  Leaf,
};

inline bool is_composite(NodeKind k) {
  return k == NodeKind::Sequence || k == NodeKind::Fallback || k == NodeKind::Parallel;
}

inline bool is_decorator(NodeKind k) {
  return k == NodeKind::Inverter || k == NodeKind::ForceSuccess || k == NodeKind::Retry ||
         k == NodeKind::Timeout;
}

// Pure tree description. `threshold` is meaningful for Parallel, `limit` for
// Retry (attempts) and Timeout (tick budget), `task_id` for Leaf.
struct BtNode {
  NodeKind kind = NodeKind::Leaf;
  int threshold = 0;
  long limit = 0;
  std::string task_id;
  std::vector<BtNode> children;

  bool operator==(const BtNode&) const = default;
};

// Node label as it appears in tree text and event-log paths, e.g.
// "Parallel(2)" or "Leaf(nav_home)".
inline std::string node_label(const BtNode& n) {
  switch (n.kind) {
    case NodeKind::Sequence: return "Sequence";
    case NodeKind::Fallback: return "Fallback";
    case NodeKind::Parallel: return "Parallel(" + std::to_string(n.threshold) + ")";
    case NodeKind::Inverter: return "Inverter";
    case NodeKind::ForceSuccess: return "ForceSuccess";
    case NodeKind::Retry: return "Retry(" + std::to_string(n.limit) + ")";
    case NodeKind::Timeout: return "Timeout(" + std::to_string(n.limit) + ")";
    default: return "Leaf(" + n.task_id + ")";
  }
}

// Checks one node's own arity and arguments (children are checked by their
// own calls). Throws std::invalid_argument on violation.
inline void validate_node(const BtNode& n) {
  const std::string label = node_label(n);
  if (n.kind == NodeKind::Leaf) {
    if (n.task_id.empty()) throw std::invalid_argument("Leaf requires a task id");
    if (!n.children.empty()) throw std::invalid_argument(label + " cannot have children");
    return;
  }
  if (is_decorator(n.kind)) {
    if (n.children.size() != 1)
      throw std::invalid_argument(label + " requires exactly one child, got " +
                                  std::to_string(n.children.size()));
    if (n.kind == NodeKind::Retry && n.limit < 1)
      throw std::invalid_argument("Retry requires a positive attempt count");
    if (n.kind == NodeKind::Timeout && n.limit < 1)
      throw std::invalid_argument("Timeout requires a positive tick budget");
    return;
  }
  if (n.children.empty()) throw std::invalid_argument(label + " requires at least one child");
  if (n.kind == NodeKind::Parallel &&
      (n.threshold < 1 || n.threshold > static_cast<int>(n.children.size())))
    throw std::invalid_argument("Parallel threshold must be between 1 and the child count");
}

inline void validate_tree(const BtNode& n) {
  validate_node(n);
  for (const BtNode& c : n.children) validate_tree(c);
}

// Convenience builders; each validates the node it creates.
inline BtNode leaf(std::string task_id) {
  BtNode n;
  n.kind = NodeKind::Leaf;
  n.task_id = std::move(task_id);
  validate_node(n);
  return n;
}

inline BtNode sequence(std::vector<BtNode> children) {
  BtNode n;
  n.kind = NodeKind::Sequence;
  n.children = std::move(children);
  validate_node(n);
  return n;
}

inline BtNode fallback(std::vector<BtNode> children) {
  BtNode n;
  n.kind = NodeKind::Fallback;
  n.children = std::move(children);
  validate_node(n);
  return n;
}

inline BtNode parallel(int threshold, std::vector<BtNode> children) {
  BtNode n;
  n.kind = NodeKind::Parallel;
  n.threshold = threshold;
  n.children = std::move(children);
  validate_node(n);
  return n;
}

inline BtNode inverter(BtNode child) {
  BtNode n;
  n.kind = NodeKind::Inverter;
  n.children.push_back(std::move(child));
  validate_node(n);
  return n;
}

inline BtNode force_success(BtNode child) {
  BtNode n;
  n.kind = NodeKind::ForceSuccess;
  n.children.push_back(std::move(child));
  validate_node(n);
  return n;
}

inline BtNode retry(long attempts, BtNode child) {
  BtNode n;
  n.kind = NodeKind::Retry;
  n.limit = attempts;
  n.children.push_back(std::move(child));
  validate_node(n);
  return n;
}

inline BtNode timeout(long ticks, BtNode child) {
  BtNode n;
  n.kind = NodeKind::Timeout;
  n.limit = ticks;
  n.children.push_back(std::move(child));
  validate_node(n);
  return n;
}

// Keyed value store through which leaf tasks exchange data.
class Blackboard {
 public:
  using Value = std::variant<bool, long, double, std::string, Vec3>;

  template <class T>
  void set(const std::string& key, T value) {
    values_[key] = Value(std::move(value));
  }

  // Returns the stored value if present and of type T, else nullptr.
  template <class T>
  const T* get_if(const std::string& key) const {
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : std::get_if<T>(&it->second);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void erase(const std::string& key) { values_.erase(key); }
  std::size_t size() const { return values_.size(); }

 private:
  std::map<std::string, Value> values_;
};

enum class TaskState { Idle, Running, Finished };

// Execution-side view of one leaf's asynchronous task.
struct TaskHandle {
  std::string task_id;
  TaskState state = TaskState::Idle;
  Status result = Status::Failure;  // valid once state == Finished
  int start_count = 0;
  int cancel_count = 0;
  long started_tick = -1;
  long last_poll_tick = -1;
};

// The engine talks to robot tasks only through this interface: a task is
// started once, polled every tick while running, and canceled when abandoned.
class TaskRuntime {
 public:
  virtual ~TaskRuntime() = default;
  virtual void start(TaskHandle& handle, Blackboard& blackboard) = 0;
  virtual Status poll(TaskHandle& handle, Blackboard& blackboard) = 0;
  virtual void cancel(TaskHandle& handle, Blackboard& blackboard) = 0;
};

// One event-log row: the status a node reported on a given tick.
struct TickEvent {
  long tick = 0;
  std::string node_path;
  Status status = Status::Running;

  bool operator==(const TickEvent&) const = default;
};

// Ticks a tree against a task runtime, keeping all mutable state (composite
// cursors, retry/timeout counters, task handles) outside the tree itself.
class TreeRunner {
 public:
  TreeRunner(BtNode tree, TaskRuntime& runtime)
      : tree_(std::move(tree)), runtime_(&runtime) {
    validate_tree(tree_);
    index(tree_, node_label(tree_));
    states_.resize(nodes_.size());
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      if (nodes_[id]->kind == NodeKind::Parallel)
        states_[id].finished.assign(nodes_[id]->children.size(), 0);
    }
  }

  // Runs one top-down traversal and returns the root status.
  Status tick(Blackboard& blackboard) {
    const Status s = tick_node(0, blackboard);
    ++tick_count_;
    return s;
  }

  // Cancels every running task and resets all node memory.
  void halt(Blackboard& blackboard) { halt_node(0, blackboard); }

  const BtNode& tree() const { return tree_; }
  long tick_count() const { return tick_count_; }
  const std::vector<TickEvent>& events() const { return events_; }
  void clear_events() { events_.clear(); }

  // Task handles in tree preorder, one per leaf.
  const std::vector<TaskHandle>& handles() const { return handles_; }

  // First leaf handle carrying the given task id, or nullptr.
  const TaskHandle* find_handle(const std::string& task_id) const {
    for (const TaskHandle& h : handles_)
      if (h.task_id == task_id) return &h;
    return nullptr;
  }

 private:
  struct NodeState {
    int resume = 0;                  // Sequence/Fallback cursor
    long attempts = 0;               // Retry
    long running_ticks = 0;          // Timeout
    std::vector<uint8_t> finished;   // Parallel: which children already succeeded

    void reset() {
      resume = 0;
      attempts = 0;
      running_ticks = 0;
      finished.assign(finished.size(), 0);
    }
  };

  // Preorder indexing; paths disambiguate siblings by child index, e.g.
  // "Sequence/Parallel(1)[0]/Leaf(detect_fire)[1]".
  void index(const BtNode& n, const std::string& path) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(&n);
    paths_.push_back(path);
    handle_of_.push_back(-1);
    if (n.kind == NodeKind::Leaf) {
      handle_of_[id] = static_cast<int>(handles_.size());
      TaskHandle h;
      h.task_id = n.task_id;
      handles_.push_back(std::move(h));
    }
    for (std::size_t k = 0; k < n.children.size(); ++k) {
      index(n.children[k],
            path + "/" + node_label(n.children[k]) + "[" + std::to_string(k) + "]");
    }
  }

  // Ids are assigned in preorder, so a node's first child is id + 1 and each
  // further sibling follows the previous child's whole subtree.
  int subtree_size(int id) const {
    int size = 1;
    for (std::size_t k = 0; k < nodes_[id]->children.size(); ++k)
      size += subtree_size(id + size);
    return size;
  }

  std::vector<int> child_ids(int id) const {
    std::vector<int> ids;
    int next = id + 1;
    for (std::size_t k = 0; k < nodes_[id]->children.size(); ++k) {
      ids.push_back(next);
      next += subtree_size(next);
    }
    return ids;
  }

  Status tick_node(int id, Blackboard& bb) {
    const BtNode& n = *nodes_[id];
    Status s;
    switch (n.kind) {
      case NodeKind::Sequence: s = tick_sequence(id, bb, /*invert=*/false); break;
      case NodeKind::Fallback: s = tick_sequence(id, bb, /*invert=*/true); break;
      case NodeKind::Parallel: s = tick_parallel(id, bb); break;
      case NodeKind::Inverter: {
        const Status c = tick_node(id + 1, bb);
        s = c == Status::Running ? c
            : c == Status::Success ? Status::Failure
                                   : Status::Success;
        break;
      }
      case NodeKind::ForceSuccess: {
        const Status c = tick_node(id + 1, bb);
        s = c == Status::Running ? Status::Running : Status::Success;
        break;
      }
      case NodeKind::Retry: s = tick_retry(id, bb); break;
      case NodeKind::Timeout: s = tick_timeout(id, bb); break;
      default: s = tick_leaf(id, bb); break;
    }
    events_.push_back({tick_count_, paths_[id], s});
    return s;
  }

  // Sequence, or its dual when `invert` is set: Fallback behaves exactly like
  // a Sequence whose child statuses have SUCCESS and FAILURE swapped.
  Status tick_sequence(int id, Blackboard& bb, bool invert) {
    NodeState& st = states_[id];
    const std::vector<int> kids = child_ids(id);
    const Status stop = invert ? Status::Success : Status::Failure;
    while (st.resume < static_cast<int>(kids.size())) {
      const Status s = tick_node(kids[st.resume], bb);
      if (s == Status::Running) return Status::Running;
      if (s == stop) {
        st.reset();
        return s;
      }
      ++st.resume;
    }
    st.reset();
    return invert ? Status::Failure : Status::Success;
  }

  Status tick_parallel(int id, Blackboard& bb) {
    NodeState& st = states_[id];
    const BtNode& n = *nodes_[id];
    const std::vector<int> kids = child_ids(id);
    int successes = 0;
    for (uint8_t f : st.finished) successes += f;
    for (std::size_t i = 0; i < kids.size(); ++i) {
      if (st.finished[i]) continue;
      const Status s = tick_node(kids[i], bb);
      if (s == Status::Failure) {
        halt_children(id, bb);
        st.reset();
        return Status::Failure;
      }
      if (s == Status::Success) {
        st.finished[i] = 1;
        if (++successes >= n.threshold) {
          halt_children(id, bb);
          st.reset();
          return Status::Success;
        }
      }
    }
    return Status::Running;
  }

  Status tick_retry(int id, Blackboard& bb) {
    NodeState& st = states_[id];
    for (;;) {
      const Status s = tick_node(id + 1, bb);
      if (s == Status::Failure) {
        if (++st.attempts >= nodes_[id]->limit) {
          st.reset();
          return Status::Failure;
        }
        continue;  // the child reset itself on failure; re-run it this tick
      }
      if (s == Status::Success) st.reset();
      return s;
    }
  }

  Status tick_timeout(int id, Blackboard& bb) {
    NodeState& st = states_[id];
    const Status s = tick_node(id + 1, bb);
    if (s == Status::Running) {
      if (++st.running_ticks >= nodes_[id]->limit) {
        halt_node(id + 1, bb);
        st.reset();
        return Status::Failure;
      }
      return Status::Running;
    }
    st.reset();
    return s;
  }

  Status tick_leaf(int id, Blackboard& bb) {
    TaskHandle& h = handles_[handle_of_[id]];
    if (h.state != TaskState::Running) {
      h.state = TaskState::Running;
      ++h.start_count;
      h.started_tick = tick_count_;
      runtime_->start(h, bb);
    }
    h.last_poll_tick = tick_count_;
    const Status s = runtime_->poll(h, bb);
    if (s != Status::Running) {
      h.state = TaskState::Finished;
      h.result = s;
    }
    return s;
  }

  // Cancels running tasks in the subtree and clears its node memory.
  void halt_node(int id, Blackboard& bb) {
    const BtNode& n = *nodes_[id];
    if (n.kind == NodeKind::Leaf) {
      TaskHandle& h = handles_[handle_of_[id]];
      if (h.state == TaskState::Running) {
        runtime_->cancel(h, bb);
        h.state = TaskState::Idle;
        ++h.cancel_count;
      }
      return;
    }
    halt_children(id, bb);
    states_[id].reset();
  }

  void halt_children(int id, Blackboard& bb) {
    for (int kid : child_ids(id)) halt_node(kid, bb);
  }

  BtNode tree_;
  TaskRuntime* runtime_;
  std::vector<const BtNode*> nodes_;
  std::vector<std::string> paths_;
  std::vector<int> handle_of_;
  std::vector<TaskHandle> handles_;
  std::vector<NodeState> states_;
  std::vector<TickEvent> events_;
  long tick_count_ = 0;
};

// Raised by load_tree with the 1-based line where parsing failed.
struct ParseError : std::runtime_error {
  ParseError(int line_number, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_number) + ": " + what),
        line(line_number) {}
  int line;
};

namespace btdetail {

struct Token {
  enum Type { Identifier, Integer, Open, Close, BraceOpen, BraceClose, End } type;
  std::string text;
  long value = 0;
  int line = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) {}

  Token next() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r' ||
            text_[pos_] == '\n')) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
    if (pos_ >= text_.size()) return {Token::End, "", 0, line_};
    const char c = text_[pos_];
    if (c == '(') return ++pos_, Token{Token::Open, "(", 0, line_};
    if (c == ')') return ++pos_, Token{Token::Close, ")", 0, line_};
    if (c == '{') return ++pos_, Token{Token::BraceOpen, "{", 0, line_};
    if (c == '}') return ++pos_, Token{Token::BraceClose, "}", 0, line_};
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::string num;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
        num += text_[pos_++];
      return {Token::Integer, num, std::stol(num), line_};
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string word;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        word += text_[pos_++];
      return {Token::Identifier, word, 0, line_};
    }
    throw ParseError(line_, std::string("unexpected character '") + c + "'");
  }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : lexer_(text) { advance(); }

  BtNode parse() {
    const BtNode root = parse_node();
    if (cur_.type != Token::End)
      throw ParseError(cur_.line, "unexpected trailing '" + cur_.text + "' after the root node");
    return root;
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  BtNode parse_node() {
    if (cur_.type != Token::Identifier)
      throw ParseError(cur_.line, cur_.type == Token::End
                                      ? "expected a node, found end of input"
                                      : "expected a node kind, found '" + cur_.text + "'");
    const int line = cur_.line;
    BtNode n;
    if (cur_.text == "Sequence") n.kind = NodeKind::Sequence;
    else if (cur_.text == "Fallback") n.kind = NodeKind::Fallback;
    else if (cur_.text == "Parallel") n.kind = NodeKind::Parallel;
    else if (cur_.text == "Inverter") n.kind = NodeKind::Inverter;
    else if (cur_.text == "ForceSuccess") n.kind = NodeKind::ForceSuccess;
    else if (cur_.text == "Retry") n.kind = NodeKind::Retry;
    else if (cur_.text == "Timeout") n.kind = NodeKind::Timeout;
    else if (cur_.text == "Leaf") n.kind = NodeKind::Leaf;
    else throw ParseError(line, "unknown node kind '" + cur_.text + "'");
    advance();

    if (cur_.type == Token::Open) {
      advance();
      parse_argument(n, line);
      if (cur_.type != Token::Close) throw ParseError(cur_.line, "expected ')'");
      advance();
    } else if (n.kind == NodeKind::Leaf) {
      throw ParseError(line, "Leaf requires a task id argument");
    } else if (n.kind == NodeKind::Parallel || n.kind == NodeKind::Retry ||
               n.kind == NodeKind::Timeout) {
      throw ParseError(line, node_name(n.kind) + " requires an integer argument");
    }

    if (cur_.type == Token::BraceOpen) {
      advance();
      while (cur_.type != Token::BraceClose) {
        if (cur_.type == Token::End) throw ParseError(cur_.line, "expected '}'");
        n.children.push_back(parse_node());
      }
      advance();
    }

    try {
      validate_node(n);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line, e.what());
    }
    return n;
  }

  void parse_argument(BtNode& n, int line) {
    if (n.kind == NodeKind::Leaf) {
      if (cur_.type != Token::Identifier)
        throw ParseError(cur_.line, "Leaf task id must be an identifier");
      n.task_id = cur_.text;
      advance();
      return;
    }
    if (n.kind == NodeKind::Parallel || n.kind == NodeKind::Retry || n.kind == NodeKind::Timeout) {
      if (cur_.type != Token::Integer)
        throw ParseError(cur_.line, node_name(n.kind) + " argument must be an integer");
      if (n.kind == NodeKind::Parallel) n.threshold = static_cast<int>(cur_.value);
      else n.limit = cur_.value;
      advance();
      return;
    }
    throw ParseError(line, node_name(n.kind) + " takes no arguments");
  }

  static std::string node_name(NodeKind k) {
    BtNode n;
    n.kind = k;
    n.threshold = 0;
    n.limit = 0;
    const std::string label = node_label(n);
    return label.substr(0, label.find('('));
  }

  Lexer lexer_;
  Token cur_;
};

inline void serialize_node(const BtNode& n, int depth, std::string& out) {
  out.append(2 * depth, ' ');
  out += node_label(n);
  if (!n.children.empty()) {
    out += " {\n";
    for (const BtNode& c : n.children) serialize_node(c, depth + 1, out);
    out.append(2 * depth, ' ');
    out += "}";
  }
  out += "\n";
}

}  // namespace btdetail

// Parses a tree description; throws ParseError (with line number) on
// malformed input, including arity and argument violations.
inline BtNode load_tree(const std::string& text) { return btdetail::Parser(text).parse(); }

// Canonical text form; load_tree(serialize_tree(t)) reproduces t exactly.
inline std::string serialize_tree(const BtNode& tree) {
  std::string out;
  btdetail::serialize_node(tree, 0, out);
  return out;
}

// Writes the event log: one row per node visit per tick, in visit order.
inline void write_bt_events(const std::string& path, const std::vector<TickEvent>& events) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "tick,node_path,status\n";
  for (const TickEvent& e : events)
    out << e.tick << ',' << e.node_path << ',' << to_string(e.status) << '\n';
}

}  // namespace embr
