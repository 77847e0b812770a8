/*
Copyright 2026 The kadrtc Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

// kadnode: a DHT node over UDP, optionally serving browser clients on
// /ws, plus put/get/ping commands that talk to a running node through its
// control socket.

#include "kadrtc/node.hpp"
#include "kadrtc/signaling.hpp"
#include "kadrtc/udp_transport.hpp"
#include "kadrtc/ws_gateway.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <boost/asio/local/stream_protocol.hpp>
#include <boost/asio/read_until.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/streambuf.hpp>
#include <boost/asio/write.hpp>

#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <random>

using namespace kadrtc;
namespace asio = boost::asio;
using local = asio::local::stream_protocol;
using nlohmann::json;

namespace {

// One control connection: newline-delimited JSON requests, one JSON reply
// per request.
class control_session : public std::enable_shared_from_this<control_session>
{
public:
	control_session(local::socket s, node& n) : m_socket(std::move(s)), m_node(n) {}

	void start() { read(); }

private:
	void read()
	{
		asio::async_read_until(m_socket, m_buffer, '\n'
			, [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
				if (ec) return;
				std::string line(asio::buffers_begin(self->m_buffer.data())
					, asio::buffers_begin(self->m_buffer.data()) + std::ptrdiff_t(n));
				self->m_buffer.consume(n);
				self->dispatch(line);
			});
	}

	void reply(json const& j)
	{
		auto text = std::make_shared<std::string>(j.dump() + "\n");
		asio::async_write(m_socket, asio::buffer(*text)
			, [self = shared_from_this(), text](boost::system::error_code ec, std::size_t) {
				if (!ec) self->read();
			});
	}

	void dispatch(std::string const& line)
	{
		json req = json::parse(line, nullptr, false);
		if (!req.is_object() || !req.contains("cmd") || !req["cmd"].is_string())
			return reply({{"ok", false}, {"error", "malformed request"}});
		std::string const cmd = req["cmd"];
		auto self = shared_from_this();

		if (cmd == "put" && req.contains("key") && req.contains("value"))
		{
			std::string const value = req["value"].get<std::string>();
			if (value.size() > max_value_size) return reply({{"ok", false}, {"error", "value exceeds 8 KiB"}});
			m_node.store(node_id::from_sha1(req["key"].get<std::string>()), value
				, m_node.config().record_ttl_default, [self](store_result r) {
					self->reply({{"ok", r.ok}, {"acks", r.acks}, {"rounds", r.rounds}});
				});
		}
		else if (cmd == "get" && req.contains("key"))
		{
			m_node.iterative_find_value(node_id::from_sha1(req["key"].get<std::string>())
				, [self](value_lookup_result r) {
					json values = json::array();
					for (auto const& v : r.values) values.push_back(v.value);
					self->reply({{"ok", r.status == value_status::found}, {"status", to_string(r.status)}
						, {"values", values}, {"rounds", r.rounds}});
				});
		}
		else if (cmd == "ping" && req.contains("addr"))
		{
			endpoint const to(req["addr"].get<std::string>());
			if (!to.split()) return reply({{"ok", false}, {"error", "address must be host:port"}});
			m_node.ping(to, [self](std::optional<peer_info> p) {
				if (!p) return self->reply({{"ok", false}, {"error", "no answer"}});
				self->reply({{"ok", true}, {"id", p->id.to_hex()}, {"addr", p->address.str()}});
			});
		}
		else
		{
			reply({{"ok", false}, {"error", "unknown command"}});
		}
	}

	local::socket m_socket;
	node& m_node;
	asio::streambuf m_buffer;
};

void accept_control(local::acceptor& acc, node& n)
{
	acc.async_accept([&acc, &n](boost::system::error_code ec, local::socket s) {
		if (ec) return;
		std::make_shared<control_session>(std::move(s), n)->start();
		accept_control(acc, n);
	});
}

struct run_options
{
	std::string listen = "0.0.0.0:4000";
	std::string bootstrap;
	std::string id;
	std::size_t k = 20;
	std::size_t alpha = 3;
	std::string ws_listen;
	std::string control = "/tmp/kadnode.sock";
};

int run_node(run_options const& o)
{
	node_config cfg;
	cfg.k = o.k;
	cfg.alpha = o.alpha;
	cfg.validate();

	node_id id;
	if (o.id.empty())
	{
		rng r(std::random_device{}() | (std::uint64_t(std::random_device{}()) << 32));
		id = node_id::random(r);
	}
	else
	{
		auto parsed = node_id::from_hex(o.id);
		if (!parsed) throw std::invalid_argument("--id must be 40 lowercase hex characters");
		id = *parsed;
	}

	event_loop loop;
	std::unique_ptr<node> dht;
	std::unique_ptr<gateway> gw;
	std::unique_ptr<ws_gateway> ws;
	std::unique_ptr<local::acceptor> control;
	std::promise<void> stopped;

	loop.call([&] {
		dht = std::make_unique<node>(id, std::make_unique<udp_transport>(loop.context(), endpoint(o.listen)), cfg);
		std::cerr << "kadnode: id " << dht->id().to_hex() << " listening on " << dht->address().str() << "\n";
		if (!o.ws_listen.empty())
		{
			gw = std::make_unique<gateway>(*dht);
			ws = std::make_unique<ws_gateway>(loop.context(), *gw, endpoint(o.ws_listen));
			std::cerr << "kadnode: gateway on ws://" << ws->local_address().str() << "/ws\n";
		}
		std::remove(o.control.c_str());
		control = std::make_unique<local::acceptor>(loop.context(), local::endpoint(o.control));
		accept_control(*control, *dht);
		if (!o.bootstrap.empty())
		{
			dht->join(endpoint(o.bootstrap), [](join_report r) {
				if (r.ok) std::cerr << "kadnode: joined, " << r.contacts_learned << " contacts\n";
				else std::cerr << "kadnode: join failed, bootstrap node did not answer\n";
			});
		}
	});

	asio::signal_set signals(loop.context(), SIGINT, SIGTERM);
	signals.async_wait([&](boost::system::error_code, int) { stopped.set_value(); });
	stopped.get_future().wait();

	loop.call([&] {
		control.reset();
		ws.reset();
		gw.reset();
		dht.reset();
	});
	std::remove(o.control.c_str());
	loop.stop();
	return 0;
}

int control_request(std::string const& socket_path, json const& req)
{
	asio::io_context io;
	local::socket s(io);
	boost::system::error_code ec;
	s.connect(local::endpoint(socket_path), ec);
	if (ec)
	{
		std::cerr << "kadnode: cannot reach " << socket_path << ": " << ec.message() << "\n";
		return 2;
	}
	asio::write(s, asio::buffer(req.dump() + "\n"));
	asio::streambuf buf;
	asio::read_until(s, buf, '\n', ec);
	if (ec)
	{
		std::cerr << "kadnode: no reply: " << ec.message() << "\n";
		return 2;
	}
	std::string line(asio::buffers_begin(buf.data()), asio::buffers_end(buf.data()));
	json const resp = json::parse(line, nullptr, false);
	if (!resp.is_object())
	{
		std::cerr << "kadnode: bad reply\n";
		return 2;
	}
	bool const ok = resp.value("ok", false);
	if (req["cmd"] == "get" && ok)
	{
		for (auto const& v : resp["values"]) std::cout << v.get<std::string>() << "\n";
	}
	else
	{
		std::cout << resp.dump() << "\n";
	}
	return ok ? 0 : 1;
}

// Fills options that were not given on the command line from a flat
// key = value file.
void apply_config(CLI::App* cmd, std::string const& path)
{
	std::ifstream in(path);
	if (!in) throw std::runtime_error("cannot read config " + path);
	for (auto const& item : CLI::ConfigTOML().from_config(in))
	{
		if (!item.parents.empty() || item.name == "config")
			throw std::runtime_error("config " + path + ": unexpected key " + item.fullname());
		CLI::Option* opt = nullptr;
		try
		{
			opt = cmd->get_option("--" + item.name);
		}
		catch (CLI::OptionNotFound const&)
		{
			throw std::runtime_error("config " + path + ": unknown key " + item.name);
		}
		if (opt->count() > 0) continue;
		for (auto const& v : item.inputs) opt->add_result(v);
		opt->run_callback();
	}
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"kadnode: Kademlia DHT node and signaling gateway"};
	app.require_subcommand(1);

	run_options ro;
	auto* run = app.add_subcommand("run", "run a node");
	std::string config_path;
	run->add_option("--config", config_path, "flat key = value file with the same options; flags override it");
	run->add_option("--listen", ro.listen, "UDP address host:port");
	run->add_option("--bootstrap", ro.bootstrap, "address of a node to join through");
	run->add_option("--id", ro.id, "node id, 40 lowercase hex characters");
	run->add_option("--k", ro.k, "bucket size");
	run->add_option("--alpha", ro.alpha, "lookup parallelism");
	run->add_option("--ws-listen", ro.ws_listen, "serve browser clients on ws://host:port/ws");
	run->add_option("--control", ro.control, "control socket path");

	std::string socket_path = "/tmp/kadnode.sock";
	std::string key, value, addr;
	auto* put = app.add_subcommand("put", "store a value under SHA-1(key)");
	put->add_option("key", key)->required();
	put->add_option("value", value)->required();
	put->add_option("--control", socket_path, "control socket path");
	auto* get = app.add_subcommand("get", "look up the values under SHA-1(key)");
	get->add_option("key", key)->required();
	get->add_option("--control", socket_path, "control socket path");
	auto* ping = app.add_subcommand("ping", "ping a node through the running one");
	ping->add_option("addr", addr)->required();
	ping->add_option("--control", socket_path, "control socket path");

	CLI11_PARSE(app, argc, argv);

	try
	{
		if (run->parsed())
		{
			if (!config_path.empty()) apply_config(run, config_path);
			return run_node(ro);
		}
		if (put->parsed()) return control_request(socket_path, {{"cmd", "put"}, {"key", key}, {"value", value}});
		if (get->parsed()) return control_request(socket_path, {{"cmd", "get"}, {"key", key}});
		return control_request(socket_path, {{"cmd", "ping"}, {"addr", addr}});
	}
	catch (std::exception const& e)
	{
		std::cerr << "kadnode: " << e.what() << "\n";
		return 2;
	}
}
