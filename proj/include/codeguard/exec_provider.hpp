#pragma once

#include <cerrno>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <string_view>

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "codeguard/attention.hpp"
#include "codeguard/error.hpp"
#include "codeguard/log.hpp"
#include "codeguard/perplexity.hpp"
#include "codeguard/verify.hpp"

namespace codeguard {

/// A child process started with `/bin/sh -c command`, talked to through its
/// stdin and stdout one line at a time. stderr is inherited.
class Subprocess {
 public:
  explicit Subprocess(const std::string& command) : command_(command) {
    std::signal(SIGPIPE, SIG_IGN);  // a dead child must surface as EPIPE, not kill us
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw Error(ErrorCode::ProviderFailure, "pipe: " + std::string(std::strerror(errno)));
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw Error(ErrorCode::ProviderFailure, "pipe: " + std::string(std::strerror(errno)));
    }
    pid_ = fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
      throw Error(ErrorCode::ProviderFailure, "fork: " + std::string(std::strerror(errno)));
    }
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) close(fd);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    in_ = to_child[1];
    out_ = from_child[0];
    fcntl(in_, F_SETFD, FD_CLOEXEC);
    fcntl(out_, F_SETFD, FD_CLOEXEC);
  }

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  ~Subprocess() {
    if (in_ >= 0) close(in_);
    if (out_ >= 0) close(out_);
    if (pid_ > 0) {
      int status = 0;
      // closing stdin asks a well-behaved server to exit; give it a moment before killing
      for (int i = 0; i < 50; ++i) {
        if (waitpid(pid_, &status, WNOHANG) == pid_) return;
        usleep(10000);
      }
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
    }
  }

  const std::string& command() const { return command_; }
  bool alive() const { return !broken_; }

  void write_line(const std::string& line) {
    if (broken_) throw failure("process is no longer running");
    std::string buf = line + '\n';
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t w = write(in_, buf.data() + off, buf.size() - off);
      if (w < 0) {
        if (errno == EINTR) continue;
        broken_ = true;
        throw failure("write failed: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(w);
    }
  }

  std::string read_line() {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      char chunk[65536];
      const ssize_t r = read(out_, chunk, sizeof(chunk));
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) {
        broken_ = true;
        throw failure("process closed its output");
      }
      buffer_.append(chunk, static_cast<std::size_t>(r));
    }
  }

 private:
  Error failure(const std::string& why) const { return Error(ErrorCode::ProviderFailure, "'" + command_ + "': " + why); }

  std::string command_;
  pid_t pid_ = -1;
  int in_ = -1;
  int out_ = -1;
  bool broken_ = false;
  std::string buffer_;
};

/// Newline-delimited JSON request/response client. Requests are serialized;
/// responses are matched by id and stray ids are skipped.
class ProtocolClient {
 public:
  explicit ProtocolClient(const std::string& command) : proc_(command) {
    proc_.write_line(R"({"op":"hello"})");
    try {
      hello_ = nlohmann::json::parse(proc_.read_line());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ProviderFailure, std::string("bad handshake: ") + e.what());
    }
    if (!hello_.is_object() || !hello_.contains("name")) {
      throw Error(ErrorCode::ProviderFailure, "handshake response lacks a name");
    }
  }

  const nlohmann::json& hello() const { return hello_; }
  bool alive() const { return proc_.alive(); }

  /// Sends `request` (an "id" is added) and returns the matching response.
  /// A response carrying "error" is thrown as `error_code`.
  nlohmann::json call(nlohmann::json request, ErrorCode error_code = ErrorCode::ProviderFailure) {
    const std::uint64_t id = next_id_++;
    request["id"] = id;
    proc_.write_line(request.dump());
    for (;;) {
      nlohmann::json resp;
      try {
        resp = nlohmann::json::parse(proc_.read_line());
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ProviderFailure, std::string("unparseable response: ") + e.what());
      }
      if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_unsigned()) {
        throw Error(ErrorCode::ProviderFailure, "response without a numeric id");
      }
      if (resp["id"].get<std::uint64_t>() != id) {
        warn("provider response for unknown id " + resp["id"].dump() + " ignored");
        continue;
      }
      if (resp.contains("error")) {
        throw Error(error_code, resp["error"].is_string() ? resp["error"].get<std::string>() : resp["error"].dump());
      }
      return resp;
    }
  }

 private:
  Subprocess proc_;
  nlohmann::json hello_;
  std::uint64_t next_id_ = 1;
};

/// Attention provider backed by an external adapter process.
class ExecAttentionProvider final : public AttentionProvider {
 public:
  explicit ExecAttentionProvider(const std::string& command) : client_(command) {
    const auto& h = client_.hello();
    try {
      info_.name = h.at("name").get<std::string>();
      info_.dim = h.at("d").get<std::size_t>();
      info_.heads = h.at("H").get<std::size_t>();
      info_.layer = h.value("layer", std::string("last"));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ProviderFailure, std::string("handshake lacks d/H: ") + e.what());
    }
    if (info_.layer != "last") warn("provider reports layer '" + info_.layer + "', expected the last layer");
  }

  const ProviderInfo& info() const override { return info_; }

  AttentionResult attend(std::string_view text) override {
    if (text.empty()) throw Error(ErrorCode::EmptyText, "nothing to attend to");
    const auto resp = client_.call({{"op", "attend"}, {"text", std::string(text)}});
    AttentionResult r;
    try {
      r.tokens = resp.at("tokens").get<std::vector<std::string>>();
      for (const auto& o : resp.at("offsets")) r.offsets.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>()});
      for (const auto& h : resp.at("heads")) r.heads.push_back(Matrix::from_rows(h.get<std::vector<std::vector<double>>>()));
      r.embeddings = Matrix::from_rows(resp.at("embeddings").get<std::vector<std::vector<double>>>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ProviderFailure, std::string("malformed attend response: ") + e.what());
    }
    if (resp.value("truncated", false)) warn("provider truncated an input; trailing units receive no attention");
    if (r.heads.size() != info_.heads || (r.embeddings.rows() > 0 && r.embeddings.cols() != info_.dim)) {
      throw Error(ErrorCode::ProviderFailure, "attend response shape differs from handshake");
    }
    validate_attention(r);
    return r;
  }

 private:
  ProtocolClient client_;
  ProviderInfo info_;
};

class ExecPerplexityProvider final : public PerplexityProvider {
 public:
  explicit ExecPerplexityProvider(const std::string& command) : client_(command), command_(command) {}

  std::string identity() const override { return "exec:" + command_; }

  double perplexity(std::string_view text) override {
    const auto resp = client_.call({{"op", "ppl"}, {"text", std::string(text)}});
    if (!resp.contains("ppl") || !resp["ppl"].is_number()) throw Error(ErrorCode::ProviderFailure, "ppl response lacks a number");
    return resp["ppl"].get<double>();
  }

 private:
  ProtocolClient client_;
  std::string command_;
};

class ExecModel final : public ModelUnderTest {
 public:
  explicit ExecModel(const std::string& command) : client_(init(command)), command_(command) {}

  std::string identity() const override { return "exec:" + command_; }
  bool alive() const override { return client_->alive(); }

  std::string generate(std::string_view input) override {
    try {
      const auto resp = client_->call({{"op", "generate"}, {"input", std::string(input)}}, ErrorCode::ModelFailure);
      if (!resp.contains("output") || !resp["output"].is_string()) throw Error(ErrorCode::ModelFailure, "response lacks output");
      return resp["output"].get<std::string>();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ProviderFailure) throw Error(ErrorCode::ModelFailure, e.what());
      throw;
    }
  }

 private:
  static std::unique_ptr<ProtocolClient> init(const std::string& command) {
    try {
      return std::make_unique<ProtocolClient>(command);
    } catch (const Error& e) {
      throw Error(ErrorCode::ModelFailure, e.what());
    }
  }

  std::unique_ptr<ProtocolClient> client_;
  std::string command_;
};

}  // namespace codeguard
