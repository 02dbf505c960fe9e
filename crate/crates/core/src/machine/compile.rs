//! Machine-file parsing, name resolution, and type checking.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use super::eval::CExpr;
use super::syntax::{lex, BinOp, Expr, Parser, Spanned, Tok};
use super::{
    Compiled, Domain, Effect, InitClause, Invariant, Machine, MachineError, Operation, Type, Val,
    VarDecl,
};

// ---------------------------------------------------------------------------
// Expression compilation

/// Name-resolution context for one expression.
pub(crate) struct Scope<'a> {
    /// Resolves a non-local name.
    pub lookup: &'a dyn Fn(&str) -> Option<(CExpr, Type)>,
    /// Treat names nobody claims as symbol literals instead of failing.
    pub unknown_as_symbol: bool,
    pub locals: Vec<(String, Type)>,
    pub line: usize,
}

impl Scope<'_> {
    fn type_err(&self, e: &Expr, expected: impl ToString, actual: &Type) -> MachineError {
        MachineError::Type {
            line: self.line,
            expr: e.to_string(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    fn expect(&mut self, e: &Expr, want: &Type) -> Result<CExpr, MachineError> {
        let (c, t) = self.compile(e)?;
        if !t.compatible(want) {
            return Err(self.type_err(e, want, &t));
        }
        Ok(c)
    }

    fn set_of(&mut self, e: &Expr) -> Result<(CExpr, Type), MachineError> {
        let (c, t) = self.compile(e)?;
        match t {
            Type::Set(elem) => Ok((c, *elem)),
            Type::Any => Ok((c, Type::Any)),
            other => Err(self.type_err(e, "a set", &other)),
        }
    }

    pub fn compile(&mut self, e: &Expr) -> Result<(CExpr, Type), MachineError> {
        Ok(match e {
            Expr::Bool(b) => (CExpr::Lit(Val::Bool(*b)), Type::Bool),
            Expr::Int(i) => (CExpr::Lit(Val::Int(*i)), Type::Int),
            Expr::Name(n) => {
                if let Some(i) = self.locals.iter().rposition(|(x, _)| x == n) {
                    (CExpr::Local(i), self.locals[i].1.clone())
                } else if let Some(hit) = (self.lookup)(n) {
                    hit
                } else if self.unknown_as_symbol {
                    (CExpr::Lit(Val::sym(n)), Type::Sym)
                } else {
                    return Err(MachineError::UnboundSymbol {
                        name: n.clone(),
                        line: self.line,
                    });
                }
            }
            Expr::Not(a) => (CExpr::Not(Box::new(self.expect(a, &Type::Bool)?)), Type::Bool),
            Expr::Neg(a) => (CExpr::Neg(Box::new(self.expect(a, &Type::Int)?)), Type::Int),
            Expr::Bin(op, a, b) => {
                let (ca, ta) = self.compile(a)?;
                let (cb, tb) = self.compile(b)?;
                let ty = match op {
                    BinOp::And | BinOp::Or | BinOp::Implies => {
                        if !ta.compatible(&Type::Bool) {
                            return Err(self.type_err(a, Type::Bool, &ta));
                        }
                        if !tb.compatible(&Type::Bool) {
                            return Err(self.type_err(b, Type::Bool, &tb));
                        }
                        Type::Bool
                    }
                    BinOp::Eq | BinOp::Ne => {
                        if !ta.compatible(&tb) {
                            return Err(self.type_err(b, &ta, &tb));
                        }
                        Type::Bool
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        let ok = matches!(ta, Type::Int | Type::Sym | Type::Any) && ta.compatible(&tb);
                        if !ok {
                            return Err(self.type_err(e, "int or symbol operands", &ta));
                        }
                        Type::Bool
                    }
                    BinOp::In => {
                        let elem = match &tb {
                            Type::Set(t) => (**t).clone(),
                            Type::Any => Type::Any,
                            other => return Err(self.type_err(b, "a set", other)),
                        };
                        if !ta.compatible(&elem) {
                            return Err(self.type_err(a, &elem, &ta));
                        }
                        Type::Bool
                    }
                    BinOp::Add | BinOp::Sub => match (&ta, &tb) {
                        (Type::Int, Type::Int) => Type::Int,
                        (Type::Any, t) | (t, Type::Any) if matches!(t, Type::Int | Type::Any) => Type::Int,
                        (Type::Set(_), _) | (_, Type::Set(_)) if ta.compatible(&tb) => ta.join(&tb),
                        _ => return Err(self.type_err(e, "int or set operands", &ta)),
                    },
                };
                (CExpr::Bin(*op, Box::new(ca), Box::new(cb)), ty)
            }
            Expr::SetLit(items) => {
                let mut elem = Type::Any;
                let mut out = Vec::with_capacity(items.len());
                for it in items {
                    let (c, t) = self.compile(it)?;
                    if !t.compatible(&elem) {
                        return Err(self.type_err(it, &elem, &t));
                    }
                    elem = elem.join(&t);
                    out.push(c);
                }
                (CExpr::SetLit(out), Type::Set(Box::new(elem)))
            }
            Expr::Card(a) => {
                let (c, _) = self.set_of(a)?;
                (CExpr::Card(Box::new(c)), Type::Int)
            }
            Expr::Index(m, k) => {
                let (cm, tm) = self.compile(m)?;
                let (kt, vt) = match tm {
                    Type::Map(k, v) => (*k, *v),
                    Type::Any => (Type::Any, Type::Any),
                    other => return Err(self.type_err(m, "a map", &other)),
                };
                let ck = self.expect(k, &kt)?;
                (CExpr::Index(Box::new(cm), Box::new(ck)), vt)
            }
            Expr::Override(m, k, v) => {
                let (cm, tm) = self.compile(m)?;
                let (kt, vt) = match &tm {
                    Type::Map(k, v) => ((**k).clone(), (**v).clone()),
                    Type::Any => (Type::Any, Type::Any),
                    other => return Err(self.type_err(m, "a map", other)),
                };
                let ck = self.expect(k, &kt)?;
                let cv = self.expect(v, &vt)?;
                (CExpr::Override(Box::new(cm), Box::new(ck), Box::new(cv)), tm)
            }
            Expr::MapLit(items) => {
                let (mut kt, mut vt) = (Type::Any, Type::Any);
                let mut out = Vec::with_capacity(items.len());
                for (k, v) in items {
                    let (ck, tk) = self.compile(k)?;
                    if !tk.compatible(&kt) {
                        return Err(self.type_err(k, &kt, &tk));
                    }
                    kt = kt.join(&tk);
                    let (cv, tv) = self.compile(v)?;
                    if !tv.compatible(&vt) {
                        return Err(self.type_err(v, &vt, &tv));
                    }
                    vt = vt.join(&tv);
                    out.push((ck, cv));
                }
                (CExpr::MapLit(out), Type::Map(Box::new(kt), Box::new(vt)))
            }
            Expr::MapComp(x, s, body) => {
                let (cs, elem) = self.set_of(s)?;
                self.locals.push((x.clone(), elem.clone()));
                let r = self.compile(body);
                self.locals.pop();
                let (cb, tb) = r?;
                (
                    CExpr::MapComp(Box::new(cs), Box::new(cb)),
                    Type::Map(Box::new(elem), Box::new(tb)),
                )
            }
            Expr::Ite(c, a, b) => {
                let cc = self.expect(c, &Type::Bool)?;
                let (ca, ta) = self.compile(a)?;
                let (cb, tb) = self.compile(b)?;
                if !ta.compatible(&tb) {
                    return Err(self.type_err(b, &ta, &tb));
                }
                (CExpr::Ite(Box::new(cc), Box::new(ca), Box::new(cb)), ta.join(&tb))
            }
            Expr::Quant(q, x, s, body) => {
                let (cs, elem) = self.set_of(s)?;
                self.locals.push((x.clone(), elem));
                let r = self.expect(body, &Type::Bool);
                self.locals.pop();
                (CExpr::Quant(*q, Box::new(cs), Box::new(r?)), Type::Bool)
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Declarations

#[derive(Debug, Clone)]
enum DomSyn {
    Bool,
    Range(i64, i64),
    Inline(Vec<String>),
    Named(String),
    SetOf(Box<DomSyn>),
    Map(Box<DomSyn>, Box<DomSyn>),
}

#[derive(Debug)]
struct OpSyn {
    name: String,
    line: usize,
    params: Vec<(String, DomSyn)>,
    chooses: Vec<(String, Expr, usize)>,
    pres: Vec<(Expr, usize)>,
    effs: Vec<(String, Option<Expr>, Expr, usize)>,
    outs: Vec<(String, DomSyn, Expr, usize)>,
}

#[derive(Debug)]
enum Decl {
    Machine(String),
    Enum(String, Vec<String>),
    Var(String, DomSyn),
    InitAssign(String, Expr),
    InitChoose(String, Expr),
    Invariant(String, Expr, String),
    Op(OpSyn),
}

/// A declaration plus the line it starts on.
struct Logical {
    line: usize,
    text: String,
}

fn strip_comment(s: &str) -> &str {
    match s.find('#') {
        Some(i) => &s[..i],
        None => s,
    }
}

fn depth_delta(s: &str) -> i64 {
    s.chars()
        .map(|c| match c {
            '(' | '[' | '{' => 1,
            ')' | ']' | '}' => -1,
            _ => 0,
        })
        .sum()
}

/// Groups physical lines into declarations. A declaration continues onto
/// the next line while brackets are open or the line ends in a binary
/// operator.
fn logical_lines(src: &str) -> Vec<Logical> {
    let mut out: Vec<Logical> = Vec::new();
    let mut cur: Option<Logical> = None;
    let mut depth = 0i64;
    for (i, raw) in src.lines().enumerate() {
        let code = strip_comment(raw).trim_end();
        if code.trim().is_empty() {
            if let Some(c) = cur.as_mut() {
                c.text.push('\n');
            }
            continue;
        }
        match cur.as_mut() {
            Some(c) => {
                c.text.push('\n');
                c.text.push_str(code);
            }
            None => {
                cur = Some(Logical {
                    line: i + 1,
                    text: code.to_string(),
                })
            }
        }
        depth += depth_delta(code);
        let t = code.trim_end();
        let dangling = ["&&", "||", "->", ",", ":=", ":", "=", "+", "-"]
            .iter()
            .any(|op| t.ends_with(op));
        if depth <= 0 && !dangling {
            out.extend(cur.take());
            depth = 0;
        }
    }
    out.extend(cur);
    out
}

fn parse_domain(p: &mut Parser<'_>) -> Result<DomSyn, MachineError> {
    if p.eat_kw("bool") {
        return Ok(DomSyn::Bool);
    }
    if p.eat_kw("set") {
        return Ok(DomSyn::SetOf(Box::new(parse_domain(p)?)));
    }
    if p.eat_kw("map") {
        let k = parse_domain(p)?;
        p.expect_punct("->")?;
        let v = parse_domain(p)?;
        return Ok(DomSyn::Map(Box::new(k), Box::new(v)));
    }
    if p.eat_punct("{") {
        let mut items = Vec::new();
        if !p.eat_punct("}") {
            loop {
                items.push(p.ident()?);
                if p.eat_punct("}") {
                    break;
                }
                p.expect_punct(",")?;
            }
        }
        return Ok(DomSyn::Inline(items));
    }
    if matches!(p.peek(), Some(Tok::Int(_)) | Some(Tok::Punct("-"))) {
        let lo = p.int()?;
        p.expect_punct("..")?;
        let hi = p.int()?;
        return Ok(DomSyn::Range(lo, hi));
    }
    Ok(DomSyn::Named(p.ident()?))
}

fn end_of(toks: &[Spanned], l: &Logical) -> (usize, usize) {
    toks.last()
        .map_or((l.line, 1), |t| (t.line, t.col + t.tok.to_string().len()))
}

fn parse_decls(src: &str) -> Result<Vec<(usize, Decl)>, MachineError> {
    let mut decls = Vec::new();
    let mut open: Option<OpSyn> = None;
    for l in logical_lines(src) {
        let toks = lex(&l.text, l.line, 1)?;
        if toks.is_empty() {
            continue;
        }
        let mut p = Parser::new(&toks, end_of(&toks, &l));
        let kw = match p.peek() {
            Some(Tok::Ident(s)) => s.clone(),
            _ => return Err(p.err("expected a declaration keyword")),
        };
        p.bump();
        if let Some(op) = open.as_mut() {
            match kw.as_str() {
                "choose" => {
                    let x = p.ident()?;
                    p.expect_kw("in")?;
                    let e = p.expr()?;
                    op.chooses.push((x, e, l.line));
                }
                "pre" => {
                    let e = p.expr()?;
                    op.pres.push((e, l.line));
                }
                "eff" => {
                    let x = p.ident()?;
                    let key = if p.eat_punct("[") {
                        let k = p.expr()?;
                        p.expect_punct("]")?;
                        Some(k)
                    } else {
                        None
                    };
                    p.expect_punct(":=")?;
                    let e = p.expr()?;
                    op.effs.push((x, key, e, l.line));
                }
                "out" => {
                    let x = p.ident()?;
                    p.expect_punct(":")?;
                    let d = parse_domain(&mut p)?;
                    p.expect_punct(":=")?;
                    let e = p.expr()?;
                    op.outs.push((x, d, e, l.line));
                }
                "end" => {
                    let done = open.take().expect("open op");
                    decls.push((done.line, Decl::Op(done)));
                }
                _ => {
                    return Err(MachineError::Syntax {
                        line: l.line,
                        col: 1,
                        msg: format!("unexpected `{kw}` inside operation (missing `end`?)"),
                    })
                }
            }
            p.finish()?;
            continue;
        }
        let decl = match kw.as_str() {
            "machine" => Decl::Machine(p.ident()?),
            "enum" => {
                let name = p.ident()?;
                p.expect_punct("=")?;
                match parse_domain(&mut p)? {
                    DomSyn::Inline(items) => Decl::Enum(name, items),
                    _ => return Err(p.err("expected `{...}`")),
                }
            }
            "var" => {
                let name = p.ident()?;
                p.expect_punct(":")?;
                Decl::Var(name, parse_domain(&mut p)?)
            }
            "init" => {
                if p.eat_kw("choose") {
                    let x = p.ident()?;
                    p.expect_kw("in")?;
                    Decl::InitChoose(x, p.expr()?)
                } else {
                    let x = p.ident()?;
                    p.expect_punct(":=")?;
                    Decl::InitAssign(x, p.expr()?)
                }
            }
            "invariant" => {
                let id = p.ident()?;
                p.expect_punct(":")?;
                let e = p.expr()?;
                let text = l
                    .text
                    .split_once(':')
                    .map(|(_, rest)| rest.split_whitespace().collect::<Vec<_>>().join(" "))
                    .unwrap_or_default();
                Decl::Invariant(id, e, text)
            }
            "op" => {
                let name = p.ident()?;
                let mut params = Vec::new();
                if p.eat_punct("(") && !p.eat_punct(")") {
                    loop {
                        let x = p.ident()?;
                        p.expect_punct(":")?;
                        params.push((x, parse_domain(&mut p)?));
                        if p.eat_punct(")") {
                            break;
                        }
                        p.expect_punct(",")?;
                    }
                }
                p.finish()?;
                open = Some(OpSyn {
                    name,
                    line: l.line,
                    params,
                    chooses: Vec::new(),
                    pres: Vec::new(),
                    effs: Vec::new(),
                    outs: Vec::new(),
                });
                continue;
            }
            _ => {
                return Err(MachineError::Syntax {
                    line: l.line,
                    col: 1,
                    msg: format!("unknown declaration `{kw}`"),
                })
            }
        };
        p.finish()?;
        decls.push((l.line, decl));
    }
    if let Some(op) = open {
        return Err(MachineError::Syntax {
            line: op.line,
            col: 1,
            msg: format!("operation `{}` has no `end`", op.name),
        });
    }
    Ok(decls)
}

// ---------------------------------------------------------------------------
// Assembly

struct Symbols {
    enums: Vec<(String, Vec<Arc<str>>)>,
    symbols: HashSet<String>,
}

impl Symbols {
    fn domain(&self, d: &DomSyn, line: usize) -> Result<Domain, MachineError> {
        Ok(match d {
            DomSyn::Bool => Domain::Bool,
            DomSyn::Range(lo, hi) => {
                if lo > hi {
                    return Err(MachineError::BadDomain {
                        line,
                        msg: format!("empty range {lo}..{hi}"),
                    });
                }
                Domain::Range(*lo, *hi)
            }
            DomSyn::Inline(items) => Domain::Enum {
                name: None,
                items: items.iter().map(|s| Arc::from(s.as_str())).collect(),
            },
            DomSyn::Named(n) => match self.enums.iter().find(|(e, _)| e == n) {
                Some((_, items)) => Domain::Enum {
                    name: Some(n.clone()),
                    items: items.clone(),
                },
                None => {
                    return Err(MachineError::UnboundSymbol {
                        name: n.clone(),
                        line,
                    })
                }
            },
            DomSyn::SetOf(inner) => {
                let d = self.domain(inner, line)?;
                if !matches!(d, Domain::Enum { .. }) {
                    return Err(MachineError::BadDomain {
                        line,
                        msg: "set elements must come from an enumeration".into(),
                    });
                }
                Domain::SetOf(Box::new(d))
            }
            DomSyn::Map(k, v) => {
                let kd = self.domain(k, line)?;
                let vd = self.domain(v, line)?;
                if !matches!(kd, Domain::Enum { .. }) {
                    return Err(MachineError::BadDomain {
                        line,
                        msg: "map keys must come from an enumeration".into(),
                    });
                }
                if matches!(vd, Domain::Map(..)) {
                    return Err(MachineError::BadDomain {
                        line,
                        msg: "map values may not be maps".into(),
                    });
                }
                Domain::Map(Box::new(kd), Box::new(vd))
            }
        })
    }

    fn lookup_const(&self, n: &str) -> Option<(CExpr, Type)> {
        if let Some((_, items)) = self.enums.iter().find(|(e, _)| e == n) {
            let set = Val::set(items.iter().map(|s| Val::Sym(s.clone())));
            return Some((CExpr::Lit(set), Type::Set(Box::new(Type::Sym))));
        }
        if self.symbols.contains(n) {
            return Some((CExpr::Lit(Val::sym(n)), Type::Sym));
        }
        None
    }
}

fn collect_inline(d: &DomSyn, out: &mut Vec<String>) {
    match d {
        DomSyn::Inline(items) => out.extend(items.iter().cloned()),
        DomSyn::SetOf(inner) => collect_inline(inner, out),
        DomSyn::Map(k, v) => {
            collect_inline(k, out);
            collect_inline(v, out);
        }
        _ => {}
    }
}

pub fn parse_machine(src: &str) -> Result<Machine, MachineError> {
    let decls = parse_decls(src)?;

    let mut name = None;
    let mut syms = Symbols {
        enums: Vec::new(),
        symbols: HashSet::new(),
    };
    let mut inline = Vec::new();
    for (line, d) in &decls {
        match d {
            Decl::Machine(n) => {
                if name.replace(n.clone()).is_some() {
                    return Err(MachineError::DuplicateDecl {
                        name: "machine".into(),
                        line: *line,
                    });
                }
            }
            Decl::Enum(n, items) => {
                if syms.enums.iter().any(|(e, _)| e == n) {
                    return Err(MachineError::DuplicateDecl {
                        name: n.clone(),
                        line: *line,
                    });
                }
                syms.enums
                    .push((n.clone(), items.iter().map(|s| Arc::from(s.as_str())).collect()));
                inline.extend(items.iter().cloned());
            }
            Decl::Var(_, d) => collect_inline(d, &mut inline),
            Decl::Op(op) => {
                for (_, d) in &op.params {
                    collect_inline(d, &mut inline);
                }
                for (_, d, _, _) in &op.outs {
                    collect_inline(d, &mut inline);
                }
            }
            _ => {}
        }
    }
    syms.symbols.extend(inline);
    let name = name.ok_or(MachineError::Syntax {
        line: 1,
        col: 1,
        msg: "missing `machine <Name>` header".into(),
    })?;

    let mut vars: Vec<VarDecl> = Vec::new();
    for (line, d) in &decls {
        if let Decl::Var(n, dom) = d {
            if vars.iter().any(|v| &v.name == n) || syms.enums.iter().any(|(e, _)| e == n) {
                return Err(MachineError::DuplicateDecl {
                    name: n.clone(),
                    line: *line,
                });
            }
            vars.push(VarDecl {
                name: n.clone(),
                domain: syms.domain(dom, *line)?,
            });
        }
    }
    let var_lookup = |n: &str| -> Option<(CExpr, Type)> {
        vars.iter()
            .position(|v| v.name == n)
            .map(|i| (CExpr::Var(i), vars[i].domain.ty()))
            .or_else(|| syms.lookup_const(n))
    };
    let const_lookup = |n: &str| syms.lookup_const(n);

    let mut inits = Vec::new();
    let mut initialised: HashMap<usize, ()> = HashMap::new();
    let mut invariants: Vec<Invariant> = Vec::new();
    let mut ops: Vec<Operation> = Vec::new();

    for (line, d) in &decls {
        match d {
            Decl::InitAssign(x, e) | Decl::InitChoose(x, e) => {
                let var = vars
                    .iter()
                    .position(|v| &v.name == x)
                    .ok_or_else(|| MachineError::UnboundSymbol {
                        name: x.clone(),
                        line: *line,
                    })?;
                if initialised.insert(var, ()).is_some() {
                    return Err(MachineError::DuplicateInit(x.clone()));
                }
                let mut scope = Scope {
                    lookup: &const_lookup,
                    unknown_as_symbol: false,
                    locals: Vec::new(),
                    line: *line,
                };
                let vt = vars[var].domain.ty();
                let (code, t) = scope.compile(e)?;
                if let Decl::InitAssign(..) = d {
                    if !t.compatible(&vt) {
                        return Err(scope.type_err(e, &vt, &t));
                    }
                    inits.push(InitClause::Assign {
                        var,
                        expr: Compiled { src: e.clone(), code },
                    });
                } else {
                    let want = Type::Set(Box::new(vt));
                    if !t.compatible(&want) {
                        return Err(scope.type_err(e, &want, &t));
                    }
                    inits.push(InitClause::Choose {
                        var,
                        set: Compiled { src: e.clone(), code },
                    });
                }
            }
            Decl::Invariant(id, e, text) => {
                if invariants.iter().any(|i| &i.id == id) {
                    return Err(MachineError::DuplicateDecl {
                        name: id.clone(),
                        line: *line,
                    });
                }
                let mut scope = Scope {
                    lookup: &var_lookup,
                    unknown_as_symbol: false,
                    locals: Vec::new(),
                    line: *line,
                };
                let code = scope.expect(e, &Type::Bool)?;
                invariants.push(Invariant {
                    id: id.clone(),
                    pred: Compiled { src: e.clone(), code },
                    text: text.clone(),
                });
            }
            Decl::Op(op) => {
                if ops.iter().any(|o| o.name == op.name) {
                    return Err(MachineError::DuplicateDecl {
                        name: op.name.clone(),
                        line: op.line,
                    });
                }
                ops.push(compile_op(op, &vars, &syms, &var_lookup)?);
            }
            _ => {}
        }
    }
    if let Some(v) = vars.iter().enumerate().find(|(i, _)| !initialised.contains_key(i)) {
        return Err(MachineError::MissingInit(v.1.name.clone()));
    }

    Ok(Machine {
        name,
        enums: syms.enums,
        vars,
        inits,
        ops,
        invariants,
    })
}

fn compile_op(
    op: &OpSyn,
    vars: &[VarDecl],
    syms: &Symbols,
    lookup: &dyn Fn(&str) -> Option<(CExpr, Type)>,
) -> Result<Operation, MachineError> {
    let mut scope = Scope {
        lookup,
        unknown_as_symbol: false,
        locals: Vec::new(),
        line: op.line,
    };
    let mut params = Vec::new();
    for (x, d) in &op.params {
        let dom = syms.domain(d, op.line)?;
        scope.locals.push((x.clone(), dom.ty()));
        params.push((x.clone(), dom));
    }
    let mut chooses = Vec::new();
    for (x, e, line) in &op.chooses {
        scope.line = *line;
        let (code, elem) = scope.set_of(e)?;
        scope.locals.push((x.clone(), elem));
        chooses.push((x.clone(), Compiled { src: e.clone(), code }));
    }
    let mut guards = Vec::new();
    for (e, line) in &op.pres {
        scope.line = *line;
        let code = scope.expect(e, &Type::Bool)?;
        guards.push(Compiled { src: e.clone(), code });
    }
    let mut effects: Vec<Effect> = Vec::new();
    for (x, key, e, line) in &op.effs {
        scope.line = *line;
        let var = vars
            .iter()
            .position(|v| &v.name == x)
            .ok_or_else(|| MachineError::UnboundSymbol {
                name: x.clone(),
                line: *line,
            })?;
        if effects.iter().any(|f| f.var == var) {
            return Err(MachineError::DuplicateAssign {
                op: op.name.clone(),
                var: x.clone(),
            });
        }
        let vt = vars[var].domain.ty();
        let code = match key {
            None => scope.expect(e, &vt)?,
            Some(k) => {
                let whole = Expr::Override(
                    Box::new(Expr::Name(x.clone())),
                    Box::new(k.clone()),
                    Box::new(e.clone()),
                );
                // The target name must resolve to the variable even if a
                // local shadows it.
                let Type::Map(kt, et) = vt.clone() else {
                    return Err(scope.type_err(&whole, "a map variable", &vt));
                };
                let ck = scope.expect(k, &kt)?;
                let cv = scope.expect(e, &et)?;
                CExpr::Override(Box::new(CExpr::Var(var)), Box::new(ck), Box::new(cv))
            }
        };
        effects.push(Effect {
            var,
            key: key.clone(),
            value: e.clone(),
            code,
        });
    }
    let mut outs = Vec::new();
    let mut out_defs = Vec::new();
    for (x, d, e, line) in &op.outs {
        scope.line = *line;
        let dom = syms.domain(d, *line)?;
        let code = scope.expect(e, &dom.ty())?;
        outs.push((x.clone(), dom));
        out_defs.push(Compiled { src: e.clone(), code });
    }
    Ok(Operation {
        name: op.name.clone(),
        params,
        outs,
        chooses,
        guards,
        effects,
        out_defs,
    })
}

pub(crate) fn compile_state_predicate(m: &Machine, e: &Expr) -> Result<Compiled, MachineError> {
    let syms = Symbols {
        enums: m.enums.clone(),
        symbols: machine_symbols(m),
    };
    let lookup = |n: &str| -> Option<(CExpr, Type)> {
        m.var_index(n)
            .map(|i| (CExpr::Var(i), m.vars[i].domain.ty()))
            .or_else(|| syms.lookup_const(n))
    };
    let mut scope = Scope {
        lookup: &lookup,
        unknown_as_symbol: false,
        locals: Vec::new(),
        line: 1,
    };
    let code = scope.expect(e, &Type::Bool)?;
    Ok(Compiled { src: e.clone(), code })
}

fn machine_symbols(m: &Machine) -> HashSet<String> {
    fn walk(d: &Domain, out: &mut HashSet<String>) {
        match d {
            Domain::Enum { items, .. } => out.extend(items.iter().map(|s| s.to_string())),
            Domain::SetOf(i) => walk(i, out),
            Domain::Map(k, v) => {
                walk(k, out);
                walk(v, out);
            }
            _ => {}
        }
    }
    let mut out = HashSet::new();
    for (_, items) in &m.enums {
        out.extend(items.iter().map(|s| s.to_string()));
    }
    for v in &m.vars {
        walk(&v.domain, &mut out);
    }
    for op in &m.ops {
        for (_, d) in op.params.iter().chain(&op.outs) {
            walk(d, &mut out);
        }
    }
    out
}
