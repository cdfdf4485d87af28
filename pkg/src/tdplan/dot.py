"""Graphviz rendering of a plan graph."""

from __future__ import annotations

from .planner import PlanGraph, Status, StateClass

_FILL = {
    StateClass.GOAL: "palegreen",
    StateClass.GOAL_REACHING: "white",
    StateClass.DEADEND: "lightyellow",
    StateClass.FAILURE: "mistyrose",
    StateClass.UNKNOWN: "white",
}


def _quote(s: str) -> str:
    # Backslashes are left alone so "\\n" stays a DOT line break.
    return '"{}"'.format(s.replace('"', r"\""))


def to_dot(graph: PlanGraph) -> str:
    """DOT source: probability above each state, bold action edges.

    Failure states are double circles and removed states are grey. Output
    is sorted so identical graphs give identical text.
    """
    on_path = set(graph.goal_path or ())
    ids = {v: f"s{i}" for i, v in enumerate(sorted(graph.states))}
    lines = [f"digraph {_quote(graph.kb_name)} {{", "  rankdir=LR;", "  node [style=filled];"]
    for v in sorted(graph.states):
        node = graph.states[v]
        body = "\\n".join(f"{f}={val}" for f, val in v.items)
        label = f"{node.prob:.4g}\\n{'FAILURE' if v.failed else body}"
        attrs = [f"label={_quote(label)}"]
        if node.state_class is StateClass.FAILURE:
            attrs.append("shape=doublecircle")
        else:
            attrs.append("shape=box")
        if node.status is Status.REMOVED:
            attrs += ["fillcolor=grey", "fontcolor=grey30"]
        else:
            attrs.append(f"fillcolor={_FILL[node.state_class]}")
        if v in on_path:
            attrs.append("penwidth=2")
        lines.append(f"  {ids[v]} [{', '.join(attrs)}];")
    for e in sorted(graph.edges, key=lambda e: (e.source, e.kind, e.name, e.target)):
        style = "bold" if e.kind == "action" else "solid"
        lines.append(
            f"  {ids[e.source]} -> {ids[e.target]} "
            f"[label={_quote(f'{e.name} ({e.fraction:.3g})')}, style={style}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
