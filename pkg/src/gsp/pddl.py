"""Parser and data model for the STRIPS + typing subset of PDDL.

Symbols are lower-cased. Comments (``;`` to end of line) are dropped before
tokenization. Anything outside the subset raises :class:`UnsupportedFeature`
naming the construct.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import PDDLSyntaxError, SemanticError, UnsupportedFeature

SUPPORTED_REQUIREMENTS = frozenset({":strips", ":typing"})

# Connectives and sections that only appear in richer PDDL fragments.
_UNSUPPORTED_HEADS = {
    "not": ":negative-preconditions",
    "or": ":disjunctive-preconditions",
    "imply": ":disjunctive-preconditions",
    "exists": ":existential-preconditions",
    "forall": ":universal-preconditions",
    "when": ":conditional-effects",
    "=": ":equality",
    "increase": ":numeric-fluents",
    "decrease": ":numeric-fluents",
    "assign": ":numeric-fluents",
    "either": ":either-types",
}
_UNSUPPORTED_SECTIONS = {
    ":axiom": ":axioms",
    ":axioms": ":axioms",
    ":derived": ":derived-predicates",
    ":functions": ":numeric-fluents",
    ":durative-action": ":durative-actions",
    ":constraints": ":constraints",
    ":metric": ":metric",
}


@dataclass(frozen=True, order=True)
class Atom:
    """A predicate applied to variables (``?x``) or object symbols."""

    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self):
        return "(" + " ".join((self.predicate,) + self.args) + ")"


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    param_types: tuple[str, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.param_types)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]  # (variable, type)
    precondition: frozenset[Atom] = frozenset()
    add_effects: frozenset[Atom] = frozenset()
    del_effects: frozenset[Atom] = frozenset()

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple[str, ...] = ()
    types: tuple[tuple[str, str], ...] = ()  # (type, parent), declaration order
    constants: tuple[tuple[str, str], ...] = ()
    predicates: tuple[PredicateDecl, ...] = ()
    schemas: tuple[ActionSchema, ...] = ()

    @property
    def type_parent(self) -> dict[str, str]:
        return dict(self.types)

    def predicate(self, name: str) -> PredicateDecl:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    def is_subtype(self, child: str, ancestor: str) -> bool:
        parents = self.type_parent
        seen = set()
        while child not in seen:
            if child == ancestor:
                return True
            seen.add(child)
            if child not in parents:
                break
            child = parents[child]
        return ancestor == "object"


@dataclass(frozen=True)
class Instance:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...]
    init: frozenset[Atom] = field(default_factory=frozenset)
    goal: frozenset[Atom] = field(default_factory=frozenset)


# ---------------------------------------------------------------- tokenizer


@dataclass(frozen=True)
class _Tok:
    text: str
    line: int
    col: int


class _List(list):
    """A parenthesized group remembering where it opened."""

    def __init__(self, line, col):
        super().__init__()
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0]
        i, n = 0, len(line)
        while i < n:
            c = line[i]
            if c.isspace():
                i += 1
            elif c in "()":
                toks.append(_Tok(c, lineno, i + 1))
                i += 1
            else:
                j = i
                while j < n and not line[j].isspace() and line[j] not in "()":
                    j += 1
                toks.append(_Tok(line[i:j].lower(), lineno, i + 1))
                i = j
    return toks


def _read_sexpr(text: str):
    toks = _tokenize(text)
    if not toks:
        raise PDDLSyntaxError("expected '(' but input is empty", 1, 1)
    stack: list[_List] = []
    result = None
    for tok in toks:
        if tok.text == "(":
            stack.append(_List(tok.line, tok.col))
        elif tok.text == ")":
            if not stack:
                raise PDDLSyntaxError("unbalanced ')'", tok.line, tok.col)
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            elif result is None:
                result = done
            else:
                raise PDDLSyntaxError("expected end of input", tok.line, tok.col)
        else:
            if not stack:
                raise PDDLSyntaxError(f"expected '(' but found {tok.text!r}", tok.line, tok.col)
            stack[-1].append(tok)
    if stack:
        raise PDDLSyntaxError("expected ')' before end of input", stack[-1].line, stack[-1].col)
    return result


def _pos(node):
    if isinstance(node, _Tok):
        return node.line, node.col
    return node.line, node.col


def _sym(node, what="symbol"):
    if not isinstance(node, _Tok):
        raise PDDLSyntaxError(f"expected {what} but found a list", *_pos(node))
    return node.text


def _typed_list(items, allow_vars: bool):
    """Parse ``a b - t c`` into [(a, t), (b, t), (c, object)]."""
    out, pending = [], []
    i = 0
    while i < len(items):
        item = items[i]
        if isinstance(item, _List):
            if item and isinstance(item[0], _Tok) and item[0].text == "either":
                raise UnsupportedFeature(":either-types", *_pos(item))
            raise PDDLSyntaxError("expected name in typed list", *_pos(item))
        if item.text == "-":
            if i + 1 >= len(items):
                raise PDDLSyntaxError("expected type after '-'", item.line, item.col)
            tnode = items[i + 1]
            if isinstance(tnode, _List):
                if tnode and isinstance(tnode[0], _Tok) and tnode[0].text == "either":
                    raise UnsupportedFeature(":either-types", *_pos(tnode))
                raise PDDLSyntaxError("expected type name", *_pos(tnode))
            out.extend((name, tnode.text) for name, _ in pending)
            pending = []
            i += 2
            continue
        if allow_vars != item.text.startswith("?"):
            kind = "variable" if allow_vars else "object name"
            raise PDDLSyntaxError(f"expected {kind} but found {item.text!r}", item.line, item.col)
        pending.append((item.text, item))
        i += 1
    out.extend((name, "object") for name, _ in pending)
    return out


def _atom(node) -> Atom:
    if not isinstance(node, _List) or not node:
        raise PDDLSyntaxError("expected atom", *_pos(node))
    head = _sym(node[0], "predicate name")
    if head in _UNSUPPORTED_HEADS:
        raise UnsupportedFeature(_UNSUPPORTED_HEADS[head], *_pos(node))
    return Atom(head, tuple(_sym(a, "argument") for a in node[1:]))


def _conjunction(node) -> list[Atom]:
    """Atoms of ``(and ...)``, a single atom, or ``()``."""
    if isinstance(node, _Tok):
        raise PDDLSyntaxError("expected formula", node.line, node.col)
    if not node:
        return []
    if isinstance(node[0], _Tok) and node[0].text == "and":
        out = []
        for sub in node[1:]:
            out.extend(_conjunction(sub))
        return out
    return [_atom(node)]


def _effects(node):
    adds, dels = [], []
    if isinstance(node, _Tok):
        raise PDDLSyntaxError("expected effect", node.line, node.col)
    if not node:
        return adds, dels
    parts = node[1:] if isinstance(node[0], _Tok) and node[0].text == "and" else [node]
    for part in parts:
        if isinstance(part, _List) and part and isinstance(part[0], _Tok):
            if part[0].text == "and":
                a, d = _effects(part)
                adds += a
                dels += d
                continue
            if part[0].text == "not":
                if len(part) != 2:
                    raise PDDLSyntaxError("expected one atom inside 'not'", *_pos(part))
                dels.append(_atom(part[1]))
                continue
        adds.append(_atom(part))
    return adds, dels


def _expect_define(tree, kind):
    if not isinstance(tree, _List) or not tree or _sym(tree[0]) != "define":
        raise PDDLSyntaxError("expected '(define'", *_pos(tree))
    if len(tree) < 2 or not isinstance(tree[1], _List) or len(tree[1]) != 2:
        raise PDDLSyntaxError(f"expected '({kind} <name>)'", *_pos(tree))
    if _sym(tree[1][0]) != kind:
        raise PDDLSyntaxError(f"expected '{kind}' but found {tree[1][0].text!r}", *_pos(tree[1][0]))
    return _sym(tree[1][1], f"{kind} name")


def _check_requirements(node):
    reqs = []
    for r in node[1:]:
        name = _sym(r, "requirement")
        if name not in SUPPORTED_REQUIREMENTS:
            raise UnsupportedFeature(name, *_pos(r))
        reqs.append(name)
    return tuple(reqs)


# ---------------------------------------------------------------- domain


def parse_domain(text: str) -> Domain:
    tree = _read_sexpr(text)
    name = _expect_define(tree, "domain")
    reqs: tuple[str, ...] = ()
    types: list[tuple[str, str]] = []
    constants: list[tuple[str, str]] = []
    predicates: list[PredicateDecl] = []
    raw_schemas = []
    for section in tree[2:]:
        if not isinstance(section, _List) or not section:
            raise PDDLSyntaxError("expected section", *_pos(section))
        head = _sym(section[0], "section keyword")
        if head in _UNSUPPORTED_SECTIONS:
            raise UnsupportedFeature(_UNSUPPORTED_SECTIONS[head], *_pos(section))
        if head == ":requirements":
            reqs = _check_requirements(section)
        elif head == ":types":
            types = _typed_list(section[1:], allow_vars=False)
        elif head == ":constants":
            constants = _typed_list(section[1:], allow_vars=False)
        elif head == ":predicates":
            for decl in section[1:]:
                if not isinstance(decl, _List) or not decl:
                    raise PDDLSyntaxError("expected predicate declaration", *_pos(decl))
                pname = _sym(decl[0], "predicate name")
                params = _typed_list(decl[1:], allow_vars=True)
                predicates.append(PredicateDecl(pname, tuple(t for _, t in params)))
        elif head == ":action":
            raw_schemas.append(section)
        else:
            raise PDDLSyntaxError(f"unknown domain section {head!r}", *_pos(section))

    known_types = {"object"} | {t for t, _ in types} | {p for _, p in types}
    seen_preds = set()
    for p in predicates:
        if p.name in seen_preds:
            raise SemanticError(f"predicate {p.name!r} declared twice")
        seen_preds.add(p.name)
        for t in p.param_types:
            if t not in known_types:
                raise SemanticError(f"predicate {p.name!r} uses undeclared type {t!r}")
    for c, t in constants:
        if t not in known_types:
            raise SemanticError(f"constant {c!r} has undeclared type {t!r}")
    schemas = [_parse_schema(s, predicates, known_types, {c for c, _ in constants}) for s in raw_schemas]
    names = [s.name for s in schemas]
    if len(set(names)) != len(names):
        raise SemanticError("duplicate action schema name")
    if seen_preds & set(names):
        raise SemanticError(f"names used for both predicates and schemas: {sorted(seen_preds & set(names))}")
    return Domain(
        name=name,
        requirements=reqs,
        types=tuple((t, p) for t, p in types),
        constants=tuple(constants),
        predicates=tuple(predicates),
        schemas=tuple(schemas),
    )


def _parse_schema(section, predicates, known_types, constants) -> ActionSchema:
    if len(section) < 2:
        raise PDDLSyntaxError("expected action name", *_pos(section))
    name = _sym(section[1], "action name")
    params, pre, adds, dels = [], [], [], []
    i = 2
    while i < len(section):
        key = _sym(section[i], "':parameters', ':precondition' or ':effect'")
        if i + 1 >= len(section):
            raise PDDLSyntaxError(f"expected value after {key}", *_pos(section[i]))
        val = section[i + 1]
        if key == ":parameters":
            if not isinstance(val, _List):
                raise PDDLSyntaxError("expected parameter list", *_pos(val))
            params = _typed_list(list(val), allow_vars=True)
        elif key == ":precondition":
            pre = _conjunction(val)
        elif key == ":effect":
            adds, dels = _effects(val)
        else:
            raise PDDLSyntaxError(f"unknown action field {key!r}", *_pos(section[i]))
        i += 2
    decl = {p.name: p for p in predicates}
    variables = {v for v, _ in params}
    for v, t in params:
        if t not in known_types:
            raise SemanticError(f"action {name!r}: parameter {v} has undeclared type {t!r}")
    for atom in pre + adds + dels:
        if atom.predicate not in decl:
            raise SemanticError(f"action {name!r} uses undeclared predicate {atom.predicate!r}")
        if decl[atom.predicate].arity != len(atom.args):
            raise SemanticError(f"action {name!r}: arity mismatch in {atom}")
        for a in atom.args:
            if a.startswith("?") and a not in variables:
                raise SemanticError(f"action {name!r}: undeclared variable {a}")
            if not a.startswith("?") and a not in constants:
                raise SemanticError(f"action {name!r}: unknown constant {a!r}")
    return ActionSchema(name, tuple(params), frozenset(pre), frozenset(adds), frozenset(dels))


# ---------------------------------------------------------------- instance


def parse_instance(text: str, dom: Domain) -> Instance:
    tree = _read_sexpr(text)
    name = _expect_define(tree, "problem")
    dname = None
    objects: list[tuple[str, str]] = []
    init: list[Atom] = []
    goal: list[Atom] = []
    for section in tree[2:]:
        if not isinstance(section, _List) or not section:
            raise PDDLSyntaxError("expected section", *_pos(section))
        head = _sym(section[0], "section keyword")
        if head in _UNSUPPORTED_SECTIONS:
            raise UnsupportedFeature(_UNSUPPORTED_SECTIONS[head], *_pos(section))
        if head == ":domain":
            dname = _sym(section[1], "domain name")
        elif head == ":requirements":
            _check_requirements(section)
        elif head == ":objects":
            objects = _typed_list(section[1:], allow_vars=False)
        elif head == ":init":
            for a in section[1:]:
                init.append(_atom(a))
        elif head == ":goal":
            if len(section) != 2:
                raise PDDLSyntaxError("expected a single goal formula", *_pos(section))
            goal = _conjunction(section[1])
        else:
            raise PDDLSyntaxError(f"unknown problem section {head!r}", *_pos(section))
    if dname is None:
        raise PDDLSyntaxError("missing (:domain ...)", *_pos(tree))
    if dname != dom.name:
        raise SemanticError(f"problem refers to domain {dname!r}, loaded {dom.name!r}")

    all_types = {"object"} | {t for t, _ in dom.types} | {p for _, p in dom.types}
    typing = dict(dom.constants)
    for o, t in objects:
        if t not in all_types:
            raise SemanticError(f"object {o!r} has undeclared type {t!r}")
        if o in typing and typing[o] != t:
            raise SemanticError(f"object {o!r} declared twice with different types")
        typing[o] = t
    decls = {p.name: p for p in dom.predicates}
    for where, atoms in (("init", init), ("goal", goal)):
        for atom in atoms:
            p = decls.get(atom.predicate)
            if p is None:
                raise SemanticError(f"{where}: unknown predicate {atom.predicate!r}")
            if p.arity != len(atom.args):
                raise SemanticError(f"{where}: arity mismatch in {atom}")
            for arg, t in zip(atom.args, p.param_types):
                if arg not in typing:
                    raise SemanticError(f"{where}: unknown object {arg!r} in {atom}")
                if not dom.is_subtype(typing[arg], t):
                    raise SemanticError(f"{where}: {arg!r} is not of type {t!r} in {atom}")
    # Drop duplicate object declarations, keep first-seen order.
    uniq = list(dict.fromkeys(objects))
    return Instance(name, dname, tuple(uniq), frozenset(init), frozenset(goal))


# ---------------------------------------------------------------- printing


def _typed(items) -> str:
    return " ".join(f"{n} - {t}" for n, t in items)


def _conj(atoms) -> str:
    atoms = sorted(atoms)
    if not atoms:
        return "()"
    return "(and " + " ".join(str(a) for a in atoms) + ")"


def domain_to_pddl(dom: Domain) -> str:
    lines = [f"(define (domain {dom.name})"]
    if dom.requirements:
        lines.append("  (:requirements " + " ".join(dom.requirements) + ")")
    if dom.types:
        lines.append("  (:types " + _typed(dom.types) + ")")
    if dom.constants:
        lines.append("  (:constants " + _typed(dom.constants) + ")")
    preds = []
    for p in dom.predicates:
        args = " ".join(f"?x{i} - {t}" for i, t in enumerate(p.param_types))
        preds.append(f"({p.name}{' ' + args if args else ''})")
    lines.append("  (:predicates " + " ".join(preds) + ")")
    for s in dom.schemas:
        eff = sorted(s.add_effects) + [f"(not {a})" for a in sorted(s.del_effects)]
        eff_s = "(and " + " ".join(str(e) for e in eff) + ")" if eff else "()"
        lines.append(f"  (:action {s.name}")
        lines.append(f"    :parameters ({_typed(s.params)})")
        lines.append(f"    :precondition {_conj(s.precondition)}")
        lines.append(f"    :effect {eff_s})")
    lines.append(")")
    return "\n".join(lines) + "\n"


def instance_to_pddl(inst: Instance) -> str:
    lines = [f"(define (problem {inst.name})", f"  (:domain {inst.domain_name})"]
    lines.append("  (:objects " + _typed(inst.objects) + ")")
    lines.append("  (:init " + " ".join(str(a) for a in sorted(inst.init)) + ")")
    lines.append(f"  (:goal {_conj(inst.goal)})")
    lines.append(")")
    return "\n".join(lines) + "\n"


def load_domain(path) -> Domain:
    with open(path, encoding="utf-8") as fh:
        return parse_domain(fh.read())


def load_instance(path, dom: Domain) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read(), dom)
