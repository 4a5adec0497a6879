"""Stage two, part A: draft a workflow from descriptors, absorb expert
critiques, and decompose complex tasks until every leaf is atomic.

Atomicity follows agent capability, not task structure: a task is Atomic
exactly when some single registered provider covers its whole capability set.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .errors import InvalidEdit, NoCapableProvider, NoServiceMapping
from .ontology import DecompositionTemplate, Ontology
from .util import frac_str, to_fraction

BUDGET_TOLERANCE = Fraction(1, 10**9)


@dataclass
class Task:
    task_id: str
    required_capabilities: frozenset
    budget: Fraction
    deadline: int = 0
    mode: str = "negotiate"  # "negotiate" | "auction"
    depends_on: frozenset = frozenset()
    atomicity: str = "Unclassified"  # Unclassified | Atomic | Complex

    def __post_init__(self):
        if not self.required_capabilities:
            raise ValueError("required_capabilities must be nonempty")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "required_capabilities": sorted(self.required_capabilities),
            "budget": frac_str(self.budget),
            "deadline": self.deadline,
            "mode": self.mode,
            "depends_on": sorted(self.depends_on),
            "atomicity": self.atomicity,
        }


@dataclass
class Workflow:
    workflow_id: str
    request_id: str
    tasks: dict = field(default_factory=dict)  # task_id -> Task
    revision: int = 0

    def topo_order(self) -> list:
        """Deterministic topological order (Kahn, task_id tie-break);
        raises InvalidEdit on a cycle."""
        indeg = {tid: 0 for tid in self.tasks}
        for task in self.tasks.values():
            for dep in task.depends_on:
                if dep not in self.tasks:
                    raise InvalidEdit(f"dangling dependency {dep} of {task.task_id}")
            indeg[task.task_id] = len(task.depends_on)
        ready = sorted(tid for tid, d in indeg.items() if d == 0)
        out = []
        while ready:
            tid = ready.pop(0)
            out.append(tid)
            changed = False
            for task in self.tasks.values():
                if tid in task.depends_on:
                    indeg[task.task_id] -= 1
                    if indeg[task.task_id] == 0:
                        ready.append(task.task_id)
                        changed = True
            if changed:
                ready.sort()
        if len(out) != len(self.tasks):
            raise InvalidEdit("cycle detected")
        return out

    def total_budget(self) -> Fraction:
        return sum((t.budget for t in self.tasks.values()), Fraction(0))

    def to_json_dict(self) -> dict:
        return {
            "workflow_id": self.workflow_id,
            "request_id": self.request_id,
            "revision": self.revision,
            "tasks": [self.tasks[tid].to_json_dict() for tid in sorted(self.tasks)],
        }


@dataclass(frozen=True)
class ExpertEdit:
    op: str  # AddTask | RemoveTask | SplitTask | MergeTasks | Reorder | Rebudget
    params: tuple  # sorted (key, value) pairs

    @staticmethod
    def make(op: str, **params) -> "ExpertEdit":
        return ExpertEdit(op, tuple(sorted(params.items())))

    def param(self, key, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default


def draft_workflow(descriptors, ontology: Ontology, total_budget: Fraction,
                   workflow_id: str = "w1") -> Workflow:
    """One task per service entry of each final tag, equal budget split,
    chain precedence in (tag, entry) order."""
    final_tags = descriptors.problem_description["tags"]
    entries = []
    for tag in sorted(final_tags):
        mapped = ontology.services.get(tag)
        if not mapped:
            raise NoServiceMapping(tag)
        entries.extend(mapped)
    if not entries:
        raise NoServiceMapping("no final tags")
    budget = Fraction(total_budget)
    share = budget / len(entries)
    tasks = {}
    prev = None
    for i, entry in enumerate(entries, start=1):
        tid = f"t{i}"
        tasks[tid] = Task(
            task_id=tid,
            required_capabilities=entry.capabilities,
            budget=share,
            mode=entry.mode,
            depends_on=frozenset([prev]) if prev else frozenset(),
        )
        prev = tid
    return Workflow(
        workflow_id=workflow_id,
        request_id=descriptors.problem_description["request_id"],
        tasks=tasks,
        revision=0,
    )


def classify_task(task: Task, registrar) -> str:
    return "Atomic" if registrar.find_providers(task.required_capabilities) else "Complex"


def decompose(task: Task, templates, registrar) -> list:
    """Expand a Complex task into Atomic sub-tasks.

    Template whose pattern equals the capability set wins; otherwise one
    sub-task per capability with an equal budget split.  Recursion depth is
    bounded by the capability count because every expansion step strictly
    shrinks part sizes.
    """
    if classify_task(task, registrar) == "Atomic":
        return [replace(task, atomicity="Atomic")]
    if len(task.required_capabilities) == 1:
        raise NoCapableProvider(sorted(task.required_capabilities)[0])
    template = next(
        (t for t in templates
         if t.pattern == task.required_capabilities
         and all(p.capabilities < t.pattern for p in t.parts)),
        None,
    )
    subs = []
    if template is not None:
        ids = [f"{task.task_id}.{i + 1}" for i in range(len(template.parts))]
        for i, part in enumerate(template.parts):
            subs.append(Task(
                task_id=ids[i],
                required_capabilities=part.capabilities,
                budget=task.budget * template.budget_split[i],
                mode=task.mode,
                deadline=task.deadline,
                depends_on=frozenset(ids[j] for j in part.after),
            ))
    else:
        caps = sorted(task.required_capabilities)
        share = task.budget / len(caps)
        for i, cap in enumerate(caps, start=1):
            subs.append(Task(
                task_id=f"{task.task_id}.{i}",
                required_capabilities=frozenset([cap]),
                budget=share,
                mode=task.mode,
                deadline=task.deadline,
            ))
    leaves = []
    for sub in subs:
        leaves.extend(decompose(sub, templates, registrar))
    # precedence pointing at an expanded sub-task now points at all its leaves
    leaf_ids = {t.task_id for t in leaves}
    for i, t in enumerate(leaves):
        new_deps = set()
        for dep in t.depends_on:
            if dep in leaf_ids:
                new_deps.add(dep)
            else:
                new_deps |= {l.task_id for l in leaves if l.task_id.startswith(dep + ".")}
        leaves[i] = replace(t, depends_on=frozenset(new_deps))
    return leaves


def apply_critique(workflow: Workflow, edits: list, total_budget: Fraction,
                   templates=(), rebudget_approved: bool = False) -> Workflow:
    """Apply edits in order; the whole list commits atomically or not at all."""
    w = copy.deepcopy(workflow)
    for edit in edits:
        _apply_edit(w, edit, templates)
    w.topo_order()  # raises InvalidEdit on cycles / dangling deps
    for task in w.tasks.values():
        if task.budget < 0:
            raise InvalidEdit(f"negative budget on {task.task_id}")
    if not rebudget_approved and abs(w.total_budget() - total_budget) > BUDGET_TOLERANCE:
        raise InvalidEdit("total budget changed without consumer approval")
    w.revision = workflow.revision + 1
    return w


def _apply_edit(w: Workflow, edit: ExpertEdit, templates) -> None:
    op = edit.op
    if op == "AddTask":
        tid = edit.param("task_id")
        if tid in w.tasks:
            raise InvalidEdit(f"duplicate task {tid}")
        w.tasks[tid] = Task(
            task_id=tid,
            required_capabilities=frozenset(edit.param("required_capabilities", ())),
            budget=to_fraction(edit.param("budget", 0)),
            mode=edit.param("mode", "negotiate"),
            depends_on=frozenset(edit.param("depends_on", ())),
        )
    elif op == "RemoveTask":
        tid = edit.param("task_id")
        if tid not in w.tasks:
            raise InvalidEdit(f"unknown task {tid}")
        del w.tasks[tid]
    elif op == "SplitTask":
        tid = edit.param("task_id")
        if tid not in w.tasks:
            raise InvalidEdit(f"unknown task {tid}")
        task = w.tasks[tid]
        template = next(
            (t for t in templates if t.pattern == task.required_capabilities), None
        )
        if template is None:
            raise InvalidEdit(f"no template matches {sorted(task.required_capabilities)}")
        del w.tasks[tid]
        ids = [f"{tid}.{i + 1}" for i in range(len(template.parts))]
        terminal = set(ids)
        for part in template.parts:
            for j in part.after:
                terminal.discard(ids[j])
        for i, part in enumerate(template.parts):
            deps = set(ids[j] for j in part.after)
            if not deps:
                deps = set(task.depends_on)
            w.tasks[ids[i]] = Task(
                task_id=ids[i],
                required_capabilities=part.capabilities,
                budget=task.budget * template.budget_split[i],
                mode=task.mode,
                deadline=task.deadline,
                depends_on=frozenset(deps),
            )
        for other in w.tasks.values():
            if tid in other.depends_on:
                w.tasks[other.task_id] = replace(
                    other,
                    depends_on=(other.depends_on - {tid}) | frozenset(terminal),
                )
    elif op == "MergeTasks":
        ids = list(edit.param("task_ids", ()))
        if len(ids) < 2 or any(t not in w.tasks for t in ids):
            raise InvalidEdit(f"bad merge set {ids}")
        new_id = edit.param("new_id", ids[0])
        caps = frozenset().union(*(w.tasks[t].required_capabilities for t in ids))
        budget = sum((w.tasks[t].budget for t in ids), Fraction(0))
        deps = frozenset().union(*(w.tasks[t].depends_on for t in ids)) - set(ids)
        mode = w.tasks[ids[0]].mode
        for t in ids:
            del w.tasks[t]
        for other in list(w.tasks.values()):
            if other.depends_on & set(ids):
                w.tasks[other.task_id] = replace(
                    other,
                    depends_on=(other.depends_on - set(ids)) | {new_id},
                )
        if new_id in w.tasks:
            raise InvalidEdit(f"duplicate task {new_id}")
        w.tasks[new_id] = Task(
            task_id=new_id, required_capabilities=caps, budget=budget,
            mode=mode, depends_on=deps,
        )
    elif op == "Reorder":
        tid = edit.param("task_id")
        if tid not in w.tasks:
            raise InvalidEdit(f"unknown task {tid}")
        deps = frozenset(edit.param("depends_on", ()))
        w.tasks[tid] = replace(w.tasks[tid], depends_on=deps)
    elif op == "Rebudget":
        tid = edit.param("task_id")
        if tid not in w.tasks:
            raise InvalidEdit(f"unknown task {tid}")
        budget = to_fraction(edit.param("budget"))
        if budget < 0:
            raise InvalidEdit("negative budget")
        w.tasks[tid] = replace(w.tasks[tid], budget=budget)
    else:
        raise InvalidEdit(f"unknown edit op {op!r}")


def decompose_workflow(workflow: Workflow, templates, registrar) -> Workflow:
    """Classify every task and expand Complex ones in place, rewiring the
    DAG so dependents of an expanded task depend on all its leaves."""
    w = copy.deepcopy(workflow)
    for tid in list(w.topo_order()):
        task = w.tasks[tid]
        kind = classify_task(task, registrar)
        if kind == "Atomic":
            w.tasks[tid] = replace(task, atomicity="Atomic")
            continue
        leaves = decompose(replace(task, atomicity="Complex"), templates, registrar)
        del w.tasks[tid]
        leaf_ids = frozenset(t.task_id for t in leaves)
        for leaf in leaves:
            deps = set(leaf.depends_on)
            if not deps & leaf_ids:
                deps |= set(task.depends_on)
            else:
                deps = (deps & leaf_ids) | set(task.depends_on)
            w.tasks[leaf.task_id] = replace(
                leaf, depends_on=frozenset(deps), atomicity="Atomic"
            )
        for other in list(w.tasks.values()):
            if tid in other.depends_on:
                w.tasks[other.task_id] = replace(
                    other, depends_on=(other.depends_on - {tid}) | leaf_ids
                )
    return w


def validate_workflow(workflow: Workflow, total_budget: Fraction,
                      capability_universe=None) -> list:
    """Structural checks; violations are values, not errors."""
    violations = []
    try:
        workflow.topo_order()
    except InvalidEdit as exc:
        violations.append(f"CycleDetected: {exc}")
    if abs(workflow.total_budget() - total_budget) > BUDGET_TOLERANCE:
        violations.append(
            f"BudgetMismatch: {frac_str(workflow.total_budget())} != {frac_str(Fraction(total_budget))}"
        )
    for task in workflow.tasks.values():
        if task.atomicity == "Complex":
            violations.append(f"NonAtomicLeaf: {task.task_id}")
        if capability_universe is not None:
            unknown = task.required_capabilities - set(capability_universe)
            if unknown:
                violations.append(f"UnknownCapability: {task.task_id}:{sorted(unknown)}")
    return violations
