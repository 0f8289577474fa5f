use super::ast::{Ast, Node, NodeId, NodeKind, Production};
use super::lexer::{Token, TokenKind};
use crate::dialect::{self, Dialect, Surface};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at token {position}: expected one of {expected:?}, found {}", found.as_deref().unwrap_or("end of input"))]
pub struct ParseError {
    pub position: usize,
    pub expected: Vec<String>,
    pub found: Option<String>,
}

/// Recursive-descent parser over a token sequence.
///
/// ```text
/// program  := ε | FUNCTION NAME '(' [NAME {',' NAME}] ')' block
/// block    := OPEN {stmt} CLOSE
/// stmt     := DECLARE NAME '=' expr ';' | NAME '=' expr ';'
///           | PRINT '(' expr ')' ';'
///           | 'if' '(' expr ')' block ['else' block]
///           | 'while' '(' expr ')' block
/// expr     := sum {(EQ | NE | AND | OR) sum}
/// sum      := atom {'+' atom}
/// atom     := NUM | STR | NAME ['[' expr ']'] | '[' [expr {',' expr}] ']'
/// ```
///
/// Keywords and punctuation are kept as terminals of the production they
/// belong to; a block's delimiters attach to the enclosing statement.
pub fn parse(tokens: &[Token], dialect: Dialect) -> Result<Ast, ParseError> {
    let mut p = Parser {
        tokens,
        dialect,
        pos: 0,
        nodes: Vec::new(),
        terminals: vec![NodeId(usize::MAX); tokens.len()],
    };
    let mut children = Vec::new();
    if !tokens.is_empty() {
        children.push(p.function()?);
    }
    if p.pos < tokens.len() {
        return Err(p.error(&["end of input"]));
    }
    let root = p.make(Production::Program, children);
    Ok(Ast { nodes: p.nodes, root, terminals: p.terminals, tokens: tokens.to_vec() })
}

struct Parser<'t> {
    tokens: &'t [Token],
    dialect: Dialect,
    pos: usize,
    nodes: Vec<Node>,
    terminals: Vec<NodeId>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_is(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text && t.kind != TokenKind::StringLiteral)
    }

    fn peek_kind(&self, kind: TokenKind) -> bool {
        self.peek().is_some_and(|t| t.kind == kind)
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            position: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().map(|t| t.text.clone()),
        }
    }

    fn alloc(&mut self, kind: NodeKind, children: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len());
        for c in &children {
            self.nodes[c.0].parent = Some(id);
        }
        self.nodes.push(Node { kind, parent: None, children });
        id
    }

    fn make(&mut self, prod: Production, children: Vec<NodeId>) -> NodeId {
        self.alloc(NodeKind::NonTerminal(prod), children)
    }

    fn bump(&mut self) -> NodeId {
        let index = self.pos;
        self.pos += 1;
        let id = self.alloc(NodeKind::Terminal(index), Vec::new());
        self.terminals[index] = id;
        id
    }

    fn expect(&mut self, text: &str) -> Result<NodeId, ParseError> {
        if self.peek_is(text) {
            Ok(self.bump())
        } else {
            Err(self.error(&[text]))
        }
    }

    fn expect_kind(&mut self, kind: TokenKind, what: &str) -> Result<NodeId, ParseError> {
        if self.peek_kind(kind) {
            Ok(self.bump())
        } else {
            Err(self.error(&[what]))
        }
    }

    fn surface(&self, s: Surface) -> &'static str {
        self.dialect.spell(s)
    }

    fn function(&mut self) -> Result<NodeId, ParseError> {
        let mut kids = vec![self.expect(self.surface(Surface::Function))?];
        kids.push(self.expect_kind(TokenKind::Identifier, "function name")?);
        kids.push(self.expect(dialect::LPAREN)?);
        if !self.peek_is(dialect::RPAREN) {
            kids.push(self.expect_kind(TokenKind::Identifier, "parameter name")?);
            while self.peek_is(dialect::COMMA) {
                kids.push(self.bump());
                kids.push(self.expect_kind(TokenKind::Identifier, "parameter name")?);
            }
        }
        kids.push(self.expect(dialect::RPAREN)?);
        self.block(&mut kids)?;
        Ok(self.make(Production::Def, kids))
    }

    fn block(&mut self, kids: &mut Vec<NodeId>) -> Result<(), ParseError> {
        let open = self.surface(Surface::BlockOpen);
        let close = self.surface(Surface::BlockClose);
        kids.push(self.expect(open)?);
        while !self.peek_is(close) {
            if self.peek().is_none() {
                return Err(self.error(&[close]));
            }
            kids.push(self.stmt()?);
        }
        kids.push(self.bump());
        Ok(())
    }

    fn stmt(&mut self) -> Result<NodeId, ParseError> {
        let declare = self.surface(Surface::Declare);
        let print = self.surface(Surface::Print);
        if self.peek_is(declare) {
            let mut kids = vec![self.bump()];
            kids.push(self.expect_kind(TokenKind::Identifier, "variable name")?);
            kids.push(self.expect(dialect::ASSIGN)?);
            kids.push(self.expr()?);
            kids.push(self.expect(dialect::SEMI)?);
            Ok(self.make(Production::Define, kids))
        } else if self.peek_kind(TokenKind::Identifier) {
            let mut kids = vec![self.bump()];
            kids.push(self.expect(dialect::ASSIGN)?);
            kids.push(self.expr()?);
            kids.push(self.expect(dialect::SEMI)?);
            Ok(self.make(Production::Assign, kids))
        } else if self.peek_is(print) {
            let mut kids = vec![self.bump()];
            kids.push(self.expect(dialect::LPAREN)?);
            kids.push(self.expr()?);
            kids.push(self.expect(dialect::RPAREN)?);
            kids.push(self.expect(dialect::SEMI)?);
            Ok(self.make(Production::Print, kids))
        } else if self.peek_is(dialect::IF) {
            let mut kids = self.header()?;
            self.block(&mut kids)?;
            if self.peek_is(dialect::ELSE) {
                let mut else_kids = vec![self.bump()];
                self.block(&mut else_kids)?;
                kids.push(self.make(Production::Else, else_kids));
            }
            Ok(self.make(Production::If, kids))
        } else if self.peek_is(dialect::WHILE) {
            let mut kids = self.header()?;
            self.block(&mut kids)?;
            Ok(self.make(Production::While, kids))
        } else {
            Err(self.error(&[declare, print, dialect::IF, dialect::WHILE, "variable name"]))
        }
    }

    /// `kw ( expr )` of an if or while statement.
    fn header(&mut self) -> Result<Vec<NodeId>, ParseError> {
        let kw = self.bump();
        let open = self.expect(dialect::LPAREN)?;
        let cond = self.expr()?;
        let close = self.expect(dialect::RPAREN)?;
        Ok(vec![kw, open, cond, close])
    }

    fn comparison_op(&self) -> bool {
        [Surface::Equal, Surface::NotEqual, Surface::And, Surface::Or]
            .iter()
            .any(|s| self.peek_is(self.surface(*s)) && self.peek_kind(TokenKind::Operator))
    }

    fn expr(&mut self) -> Result<NodeId, ParseError> {
        let mut lhs = self.sum()?;
        while self.comparison_op() {
            let op = self.bump();
            let rhs = self.sum()?;
            lhs = self.make(Production::Binary, vec![lhs, op, rhs]);
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<NodeId, ParseError> {
        let mut lhs = self.atom()?;
        while self.peek_is(dialect::PLUS) {
            let op = self.bump();
            let rhs = self.atom()?;
            lhs = self.make(Production::Binary, vec![lhs, op, rhs]);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<NodeId, ParseError> {
        if self.peek_kind(TokenKind::NumberLiteral) || self.peek_kind(TokenKind::StringLiteral) {
            return Ok(self.bump());
        }
        if self.peek_kind(TokenKind::Identifier) {
            let name = self.bump();
            if self.peek_is(dialect::LBRACKET) {
                let open = self.bump();
                let index = self.expr()?;
                let close = self.expect(dialect::RBRACKET)?;
                return Ok(self.make(Production::Index, vec![name, open, index, close]));
            }
            return Ok(name);
        }
        if self.peek_is(dialect::LBRACKET) {
            let mut kids = vec![self.bump()];
            if !self.peek_is(dialect::RBRACKET) {
                kids.push(self.expr()?);
                while self.peek_is(dialect::COMMA) {
                    kids.push(self.bump());
                    kids.push(self.expr()?);
                }
            }
            kids.push(self.expect(dialect::RBRACKET)?);
            return Ok(self.make(Production::List, kids));
        }
        Err(self.error(&["number", "string", "variable name", dialect::LBRACKET]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::tokenize;

    fn parse_src(src: &str, d: Dialect) -> Result<Ast, ParseError> {
        parse(&tokenize(src, d).unwrap(), d)
    }

    #[test]
    fn single_definition_production() {
        let ast = parse_src("def f ( ) : a = 1 ; end", Dialect::Alpha).unwrap();
        let def = ast.children(ast.root())[0];
        let stmt = ast.children(def)[5];
        assert_eq!(ast.production(stmt), Some(Production::Assign));
        let texts: Vec<_> = ast.terminals_under(stmt).into_iter().map(|i| ast.tokens()[i].text.clone()).collect();
        assert_eq!(texts, ["a", "=", "1", ";"]);
    }

    #[test]
    fn if_without_condition_is_rejected() {
        let err = parse_src("def f ( ) : if ( ) : end end", Dialect::Alpha).unwrap_err();
        assert_eq!(err.position, 7);
        assert!(err.expected.contains(&"number".to_string()));
        assert!(parse_src("function f ( ) { if { } }", Dialect::Beta).is_err());
    }

    #[test]
    fn comparison_binds_looser_than_plus() {
        let ast = parse_src("def f ( ) : print ( a + 1 == 2 ) ; end", Dialect::Alpha).unwrap();
        assert_eq!(
            ast.to_sexpr(),
            r#"(program (def "def" "f" "(" ")" ":" (print "print" "(" (binary (binary "a" "+" "1") "==" "2") ")" ";") "end"))"#
        );
    }

    #[test]
    fn empty_input_is_bare_program() {
        let ast = parse(&[], Dialect::Beta).unwrap();
        assert_eq!(ast.to_sexpr(), "(program)");
    }

    #[test]
    fn trailing_tokens_are_rejected() {
        assert!(parse_src("def f ( ) : end end", Dialect::Alpha).is_err());
    }

    #[test]
    fn terminals_cover_every_token_in_order() {
        let src = "function g ( p , q ) { var x = [ 1 , 2 ] ; if ( p === q ) { log ( x [ 0 ] ) ; } else { x = [ ] ; } while ( p ) { q = q + 1 ; } }";
        let toks = tokenize(src, Dialect::Beta).unwrap();
        let ast = parse(&toks, Dialect::Beta).unwrap();
        assert_eq!(ast.leaves(), (0..toks.len()).collect::<Vec<_>>());
        for i in 0..toks.len() {
            assert_eq!(ast.token_of(ast.terminal(i)).unwrap().index, i);
        }
    }
}
