"""Node execution over the validated DAG with content-addressed caching.

A node's cache key hashes (template id, substituted code, input layer hashes
in port order) and nothing else, so canvas moves, comments, and pins never
recompute. Executors receive substituted code plus input layers and return
output layers; the built-in executor interprets the declarative op documents
from the template library in-process, while arbitrary code goes through an
external worker process speaking a length-prefixed envelope protocol.
"""

from __future__ import annotations

import json
import struct
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor, wait, FIRST_COMPLETED
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from . import ops
from .annotations import AnnotationError, render_code
from .canonical import hash_obj
from .interaction import SelectionState, augment, strip_augmentation
from .layers import DataLayer, LayerError, deserialize_layer, load_geo, load_grid, \
    load_image_manifest, load_table, serialize_layer
from .model import DataflowSpec, ModelError, NodeSpec, downstream_closure, \
    topological_order, upstream_closure, validate
from .ops import AggSpec, OpError, TemplateRegistry


class EngineError(Exception):
    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


class ExecutorFailure(Exception):
    """Raised by executors; the message becomes the node's error log."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class MemoryStore:
    """In-memory content-addressed layer store + cache (tests, scratch runs)."""

    def __init__(self):
        self._layers: dict[str, bytes] = {}
        self._cache: dict[str, list[str]] = {}
        self._lock = threading.Lock()

    def put_layer(self, data: bytes) -> str:
        from .canonical import content_hash
        h = content_hash(data)
        with self._lock:
            self._layers[h] = data
        return h

    def get_layer(self, h: str) -> Optional[bytes]:
        return self._layers.get(h)

    def cache_get(self, key: str) -> Optional[list[str]]:
        got = self._cache.get(key)
        return list(got) if got is not None else None

    def cache_put(self, key: str, outputs: list[str]) -> None:
        with self._lock:
            self._cache[key] = list(outputs)


class _NullRecorder:
    def record_execution(self, **kw: Any) -> None:
        pass


class ListRecorder:
    """Collects execution records in memory; the default ctx recorder."""

    def __init__(self):
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def record_execution(self, **kw: Any) -> None:
        with self._lock:
            self.records.append(kw)


@dataclass
class NodeRunResult:
    node: str
    status: str  # ok | error | skipped_cached
    outputs: list[str] = field(default_factory=list)
    log: str = ""
    duration_ms: float = 0.0
    cache_hit: bool = False
    error: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "node": self.node, "status": self.status, "outputs": list(self.outputs),
            "log": self.log, "duration_ms": self.duration_ms,
            "cache_hit": self.cache_hit, "error": self.error,
        }


@dataclass
class ExecutionContext:
    workspace: str = ""
    user: str = ""
    store: MemoryStore = field(default_factory=MemoryStore)
    registry: TemplateRegistry = field(default_factory=ops.default_registry)
    executors: dict[str, "Executor"] = field(default_factory=dict)
    data_dir: Optional[Path] = None
    selections: dict[str, SelectionState] = field(default_factory=dict)
    selection_in_cache_keys: bool = False
    stale: set[str] = field(default_factory=set)
    recorder: Any = field(default_factory=ListRecorder)
    dataflow_version: Optional[str] = None
    bypass_cache: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock)

    def executor_for(self, kind: str) -> "Executor":
        ex = self.executors.get(kind)
        if ex is None:
            ex = self.executors.setdefault("_default", BuiltinExecutor())
        return ex


class Executor:
    def execute(self, kind: str, code: str, inputs: list[DataLayer],
                ctx: ExecutionContext) -> tuple[list[DataLayer], str]:
        raise NotImplementedError


def interpret_op(doc: dict, inputs: list[DataLayer],
                 read_file: Callable[[str], bytes]) -> list[DataLayer]:
    """Evaluate one declarative op document against its input layers."""
    op = doc.get("op")
    args = doc.get("args", {})

    def data(arg_path: str = "path") -> bytes:
        if "text" in args:
            return args["text"].encode("utf-8")
        return read_file(args[arg_path])

    if op == "load_table":
        return [load_table(data(), args.get("hints") or None)]
    if op == "load_geo":
        return [load_geo(data(), args["expect"])]
    if op == "load_grid":
        return [load_grid(data())]
    if op == "load_images":
        return [load_image_manifest(data())]
    if op == "remove_duplicates":
        return [ops.remove_duplicates(inputs[0], args.get("keys", []))]
    if op == "remove_missing":
        return [ops.remove_missing(inputs[0], args.get("columns", []))]
    if op == "normalize":
        return [ops.normalize(inputs[0], args["column"], args["method"])]
    if op == "group_by":
        aggs = [AggSpec(a["column"], a["func"]) for a in args.get("aggs", [])]
        return [ops.group_by(inputs[0], args["keys"], aggs)]
    if op == "spatial_join":
        return [ops.spatial_join(inputs[0], inputs[1], args.get("how", "left"))]
    if op == "assign_where":
        return [ops.assign_where(inputs[0], args["column"], args.get("value"),
                                 args.get("where_attr"), args.get("where_value"))]
    raise ExecutorFailure(f"unknown op {op!r}")


class BuiltinExecutor(Executor):
    """Interprets declarative op documents; visualization/interaction pass through."""

    def __init__(self):
        self.invocations = 0
        self._lock = threading.Lock()

    def execute(self, kind: str, code: str, inputs: list[DataLayer],
                ctx: ExecutionContext) -> tuple[list[DataLayer], str]:
        with self._lock:
            self.invocations += 1
        if kind in ("visualization", "interaction"):
            if not inputs:
                raise ExecutorFailure("pass-through node has no input layer")
            return [inputs[0]], ""

        def read_file(rel: str) -> bytes:
            if ctx.data_dir is None:
                raise ExecutorFailure("no data directory configured")
            path = (ctx.data_dir / rel).resolve()
            if not str(path).startswith(str(ctx.data_dir.resolve())):
                raise ExecutorFailure(f"path escapes data dir: {rel}")
            try:
                return path.read_bytes()
            except OSError as e:
                raise ExecutorFailure(f"cannot read {rel}: {e}")

        try:
            doc = json.loads(code)
        except json.JSONDecodeError as e:
            raise ExecutorFailure(f"op document is not valid JSON: {e}")
        try:
            return interpret_op(doc, inputs, read_file), ""
        except (OpError, LayerError) as e:
            raise ExecutorFailure(str(e))
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise ExecutorFailure(f"bad op invocation: {e!r}")


# --- worker process protocol (documented in docs/formats.md) ---------------

_MAX_FRAME = 256 * 1024 * 1024  # output size cap, bytes


def write_frame(stream, payload: bytes) -> None:
    stream.write(struct.pack(">I", len(payload)))
    stream.write(payload)


def read_frame(stream, max_bytes: int = _MAX_FRAME) -> bytes:
    header = stream.read(4)
    if len(header) != 4:
        raise ExecutorFailure("worker stream truncated")
    (n,) = struct.unpack(">I", header)
    if n > max_bytes:
        raise ExecutorFailure(f"frame of {n} bytes exceeds the cap")
    payload = stream.read(n)
    if len(payload) != n:
        raise ExecutorFailure("worker stream truncated")
    return payload


def encode_request(code: str, layers: list[DataLayer]) -> bytes:
    import io
    buf = io.BytesIO()
    write_frame(buf, json.dumps({"code": code, "inputs": len(layers)}).encode())
    for l in layers:
        write_frame(buf, serialize_layer(l))
    return buf.getvalue()


def encode_response(layers: list[DataLayer], log: str, status: str = "ok") -> bytes:
    import io
    buf = io.BytesIO()
    write_frame(buf, json.dumps({"status": status, "outputs": len(layers), "log": log}).encode())
    for l in layers:
        write_frame(buf, serialize_layer(l))
    return buf.getvalue()


class ExternalProcessExecutor(Executor):
    """Runs node code in an isolated worker process over stdin/stdout frames."""

    def __init__(self, argv: list[str], timeout_ms: int = 60_000,
                 max_output_bytes: int = _MAX_FRAME):
        self.argv = list(argv)
        self.timeout_ms = timeout_ms
        self.max_output_bytes = max_output_bytes
        self.invocations = 0
        self._lock = threading.Lock()

    def execute(self, kind: str, code: str, inputs: list[DataLayer],
                ctx: ExecutionContext) -> tuple[list[DataLayer], str]:
        with self._lock:
            self.invocations += 1
        request = encode_request(code, inputs)
        try:
            proc = subprocess.run(
                self.argv, input=request, capture_output=True,
                timeout=self.timeout_ms / 1000.0,
            )
        except subprocess.TimeoutExpired:
            raise ExecutorFailure(f"worker timed out after {self.timeout_ms} ms")
        except OSError as e:
            raise ExecutorFailure(f"cannot spawn worker: {e}")
        if proc.returncode != 0:
            tail = proc.stderr.decode("utf-8", "replace")[-2000:]
            raise ExecutorFailure(f"worker exited with {proc.returncode}: {tail}")
        if len(proc.stdout) > self.max_output_bytes:
            raise ExecutorFailure("worker output exceeds the size cap")
        import io
        buf = io.BytesIO(proc.stdout)
        header = json.loads(read_frame(buf, self.max_output_bytes).decode())
        if header.get("status") != "ok":
            raise ExecutorFailure(header.get("log", "worker reported an error"))
        layers = [deserialize_layer(read_frame(buf, self.max_output_bytes))
                  for _ in range(int(header["outputs"]))]
        return layers, header.get("log", "")


# --- scheduling -------------------------------------------------------------


def resolve_code(node: NodeSpec) -> str:
    return render_code(node.canonical_code, node.widget_values)


def cache_key(node: NodeSpec, input_keys: list[str],
              resolved_code: Optional[str] = None) -> str:
    """Key = (template, substituted code, inputs in port order); nothing else."""
    code = resolved_code if resolved_code is not None else resolve_code(node)
    return hash_obj({"template": node.template_id, "code": code, "inputs": input_keys})


def _selection_token(ctx: ExecutionContext, node_id: str) -> str:
    state = ctx.selections.get(node_id)
    ids = sorted(state.selected) if state is not None else []
    return hash_obj(ids)


def _input_bindings(spec: DataflowSpec, node: NodeSpec,
                    registry: TemplateRegistry) -> list[Optional[tuple[str, int]]]:
    """Per input port: (source node, source output port) or None if unbound."""
    template = registry.get(node.template_id)
    bindings: list[Optional[tuple[str, int]]] = [None] * len(template.ports_in)
    for d in spec.data_deps:
        if d.target != node.id:
            continue
        for out_port, in_port in d.layer_slots:
            if 0 <= in_port < len(bindings):
                bindings[in_port] = (d.source, out_port)
    return bindings


def _exec_node(
    spec: DataflowSpec,
    node: NodeSpec,
    ctx: ExecutionContext,
    results: Mapping[str, NodeRunResult],
) -> NodeRunResult:
    started = _now()
    t0 = time.monotonic()

    def finish(res: NodeRunResult, consumed: list[str], produced: list[str],
               status: str) -> NodeRunResult:
        res.duration_ms = (time.monotonic() - t0) * 1000.0
        with ctx.lock:
            ctx.recorder.record_execution(
                kind="node", workspace=ctx.workspace, user=ctx.user,
                dataflow_version=ctx.dataflow_version, node=node.id,
                template=node.template_id, code=node.canonical_code,
                cached=res.cache_hit, status=status, consumed=consumed,
                produced=produced, started=started, ended=_now(), log=res.log,
            )
            if status == "ok" or res.cache_hit:
                ctx.stale.discard(node.id)
        return res

    def error(code: str, log: str) -> NodeRunResult:
        res = NodeRunResult(node=node.id, status="error", log=log, error=code)
        return finish(res, [], [], "error")

    try:
        template = ctx.registry.get(node.template_id)
    except ops.TemplateError as e:
        return error("executor_error", str(e))

    bindings = _input_bindings(spec, node, ctx.registry)
    inputs: list[DataLayer] = []
    input_keys: list[str] = []
    consumed: list[str] = []
    for port, (pdef, binding) in enumerate(zip(template.ports_in, bindings)):
        if binding is None:
            if pdef.optional:
                input_keys.append("-")
                continue
            return error("port_arity_mismatch", f"input port {port} is unbound")
        src, out_port = binding
        upstream = results.get(src)
        if upstream is None or upstream.status == "error":
            return error("upstream_failed", src)
        if out_port >= len(upstream.outputs):
            return error("port_arity_mismatch",
                         f"{src} has no output port {out_port}")
        h = upstream.outputs[out_port]
        raw = ctx.store.get_layer(h)
        if raw is None:
            return error("executor_error", f"layer {h} missing from store")
        layer = deserialize_layer(raw)
        key = h
        if spec.node(src).kind == "interaction":
            # downstream sees the selection column; with selections excluded
            # from cache keys the values are pinned to the empty selection so
            # cached bytes stay history-independent
            if ctx.selection_in_cache_keys:
                state = ctx.selections.get(src) or SelectionState(src)
                key = f"{h}+{_selection_token(ctx, src)}"
            else:
                state = SelectionState(src)
            layer = augment(strip_augmentation(layer), state)
        inputs.append(layer)
        consumed.append(h)
        input_keys.append(key)

    try:
        code = resolve_code(node)
    except AnnotationError as e:
        return error("executor_error", f"annotation error: {e}")

    key = cache_key(node, input_keys, code)
    if not ctx.bypass_cache:
        hit = ctx.store.cache_get(key)
        if hit is not None:
            res = NodeRunResult(node=node.id, status="skipped_cached",
                                outputs=hit, cache_hit=True)
            return finish(res, consumed, hit, "ok")

    executor = ctx.executor_for(node.kind)
    try:
        outputs, log = executor.execute(node.kind, code, inputs, ctx)
    except ExecutorFailure as e:
        return error("executor_error", str(e))
    if len(outputs) != len(template.ports_out):
        return error("port_arity_mismatch",
                     f"executor returned {len(outputs)} outputs, template declares "
                     f"{len(template.ports_out)}")
    hashes = [ctx.store.put_layer(serialize_layer(l)) for l in outputs]
    ctx.store.cache_put(key, hashes)
    res = NodeRunResult(node=node.id, status="ok", outputs=hashes, log=log)
    return finish(res, consumed, hashes, "ok")


def _run_nodes(spec: DataflowSpec, targets: set[str], ctx: ExecutionContext,
               parallel: bool = False) -> dict[str, NodeRunResult]:
    report = validate(spec, ctx.registry.as_mapping())
    if not report.ok:
        raise EngineError("not_a_dag", report.violations[0].detail)
    order = [n for n in topological_order(spec) if n in targets]
    results: dict[str, NodeRunResult] = {}
    if not parallel:
        for node_id in order:
            results[node_id] = _exec_node(spec, spec.node(node_id), ctx, results)
        return results

    deps: dict[str, set[str]] = {n: set() for n in order}
    in_targets = set(order)
    for d in spec.data_deps:
        if d.target in in_targets and d.source in in_targets:
            deps[d.target].add(d.source)
    pending = set(order)
    futures = {}
    with ThreadPoolExecutor(max_workers=8) as pool:
        while pending or futures:
            ready = [n for n in sorted(pending) if deps[n] <= results.keys()]
            for n in ready:
                pending.discard(n)
                futures[pool.submit(_exec_node, spec, spec.node(n), ctx, results)] = n
            if not futures:
                break
            done, _ = wait(list(futures), return_when=FIRST_COMPLETED)
            for f in done:
                n = futures.pop(f)
                results[n] = f.result()
    return results


def run_node(spec: DataflowSpec, node_id: str, ctx: ExecutionContext) -> NodeRunResult:
    """Execute one node, auto-running any upstream nodes first."""
    if not spec.has_node(node_id):
        raise EngineError("unknown_id", node_id)
    started = _now()
    needed = upstream_closure(spec, node_id)
    results = _run_nodes(spec, needed, ctx)
    with ctx.lock:
        ctx.recorder.record_execution(
            kind="dataflow", workspace=ctx.workspace, user=ctx.user,
            dataflow_version=ctx.dataflow_version, node=None, template=None,
            code=None, cached=False,
            status="ok" if results[node_id].status != "error" else "error",
            consumed=[], produced=[], started=started, ended=_now(), log="")
    return results[node_id]


def run_dataflow(spec: DataflowSpec, ctx: ExecutionContext,
                 parallel: bool = False) -> list[NodeRunResult]:
    """Execute every node; results come back in topological order."""
    started = _now()
    targets = {n.id for n in spec.nodes}
    results = _run_nodes(spec, targets, ctx, parallel=parallel)
    ordered = [results[n] for n in topological_order(spec)]
    status = "ok" if all(r.status != "error" for r in ordered) else "error"
    with ctx.lock:
        ctx.recorder.record_execution(
            kind="dataflow", workspace=ctx.workspace, user=ctx.user,
            dataflow_version=ctx.dataflow_version, node=None, template=None,
            code=None, cached=False, status=status, consumed=[], produced=[],
            started=started, ended=_now(), log="")
    return ordered


def invalidate(spec: DataflowSpec, node_id: str, ctx: ExecutionContext) -> set[str]:
    """Mark a node and everything downstream stale (UI badging only)."""
    closure = downstream_closure(spec, node_id)
    with ctx.lock:
        ctx.stale |= closure
    return closure
