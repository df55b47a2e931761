use super::*;
use proptest::prelude::*;

fn linear(w: Vec<f64>, b: f64) -> ModelArtifact {
    let arity = w.len();
    ModelArtifact::new(Task::Regression, arity, vec![], ModelBody::Linear(Linear { weights: w, bias: b })).unwrap()
}

/// "if F1 >= 0.8 predict 1, else follow F3 (< 0.5 → 0, else 2)"
fn stump() -> ModelArtifact {
    let tree = Tree {
        nodes: vec![
            Node::Split { feature: 0, threshold: 0.8, left: 1, right: 2 },
            Node::Split { feature: 2, threshold: 0.5, left: 3, right: 4 },
            Node::Leaf { leaf: vec![1.0] },
            Node::Leaf { leaf: vec![0.0] },
            Node::Leaf { leaf: vec![2.0] },
        ],
    };
    let body = TreeEnsemble { outputs: 1, combine: Combine::Average, base_score: 0.0, trees: vec![tree] };
    ModelArtifact::new(Task::Regression, 3, vec![], ModelBody::TreeEnsemble(body)).unwrap()
}

#[test]
fn loads_linear_document() {
    let m = ModelArtifact::from_json(r#"{"task":"regression","kind":"linear","arity":2,"body":{"weights":[1,2],"bias":0}}"#).unwrap();
    assert_eq!(m.arity(), 2);
    assert_eq!(m.body().kind(), "linear");
}

#[test]
fn linear_dot_product() {
    assert_eq!(linear(vec![1.0, 2.0], 0.5).predict(&[3.0, 4.0]).unwrap(), PredictionValue::Regression(11.5));
}

#[test]
fn stump_ignores_f3_when_f1_high() {
    let m = stump();
    for f3 in [-100.0, 0.0, 0.49, 0.5, 7.0] {
        assert_eq!(m.predict(&[0.9, 0.3, f3]).unwrap(), PredictionValue::Regression(1.0));
    }
    assert_eq!(m.predict(&[0.1, 0.3, 0.2]).unwrap(), PredictionValue::Regression(0.0));
    assert_eq!(m.predict(&[0.1, 0.3, 0.7]).unwrap(), PredictionValue::Regression(2.0));
}

#[test]
fn average_of_one_tree_is_its_leaf() {
    let m = stump();
    assert_eq!(m.evaluate(&[0.9, 0.0, 0.0]).unwrap(), 1.0);
}

#[test]
fn node_feature_out_of_range_is_rejected() {
    let doc = r#"{"task":"regression","kind":"tree_ensemble","arity":3,"body":{"outputs":1,"combine":"sum","base_score":0,
        "trees":[{"nodes":[{"feature":5,"threshold":1.0,"left":1,"right":2},{"leaf":[1]},{"leaf":[2]}]}]}}"#;
    match ModelArtifact::from_json(doc) {
        Err(ModelError::Invalid { path, .. }) => assert_eq!(path, "body.trees[0].nodes[0].feature"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_reserved_and_non_finite() {
    let doc = |kind: &str| format!(r#"{{"task":"regression","kind":"{kind}","arity":1,"body":{{}}}}"#);
    assert_eq!(ModelArtifact::from_json(&doc("svm")), Err(ModelError::ReservedKind("svm".into())));
    assert_eq!(ModelArtifact::from_json(&doc("gam")), Err(ModelError::UnknownKind("gam".into())));
    let err = ModelArtifact::new(Task::Regression, 2, vec![], ModelBody::Linear(Linear { weights: vec![1.0, f64::NAN], bias: 0.0 }));
    assert!(matches!(err, Err(ModelError::Invalid { path, .. }) if path == "body.weights[1]"));
}

#[test]
fn layer_shapes_must_chain() {
    let body = Mlp {
        layers: vec![
            Dense { weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]], bias: vec![0.0, 0.0] },
            Dense { weights: vec![vec![1.0, 1.0, 1.0]], bias: vec![0.0] },
        ],
    };
    let err = ModelArtifact::new(Task::Regression, 2, vec![], ModelBody::Mlp(body));
    assert!(matches!(err, Err(ModelError::Invalid { path, .. }) if path == "body.layers[1].weights"));
}

#[test]
fn mlp_forward_by_hand() {
    // h = relu(W1 x + b1), y = W2 h + b2 with x = [1, -1]
    let body = Mlp {
        layers: vec![
            Dense { weights: vec![vec![2.0, 1.0], vec![-1.0, 3.0], vec![0.5, -0.5]], bias: vec![0.1, 0.2, -2.0] },
            Dense { weights: vec![vec![1.5, -2.0, 4.0]], bias: vec![0.25] },
        ],
    };
    // W1 x + b1 = [2 - 1 + 0.1, -1 - 3 + 0.2, 0.5 + 0.5 - 2] = [1.1, -3.8, -1.0]
    // relu → [1.1, 0, 0]; y = 1.5 * 1.1 + 0.25 = 1.9
    let m = ModelArtifact::new(Task::Regression, 2, vec![], ModelBody::Mlp(body)).unwrap();
    let y = m.evaluate(&[1.0, -1.0]).unwrap();
    assert!((y - 1.9).abs() < 1e-12, "{y}");
}

#[test]
fn transforms_apply_in_order() {
    let t = vec![
        Transform::OneHot { input: 1, categories: vec![0.0, 1.0, 2.0] },
        Transform::StandardScaler { mean: vec![1.0, 0.0, 0.0, 0.0], scale: vec![2.0, 1.0, 1.0, 1.0] },
    ];
    let body = Linear { weights: vec![1.0, 10.0, 20.0, 30.0], bias: 0.0 };
    let m = ModelArtifact::new(Task::Regression, 2, t, ModelBody::Linear(body)).unwrap();
    // x = [5, 2] → onehot [5, 0, 0, 1] → scaled [2, 0, 0, 1] → 2 + 30
    assert_eq!(m.evaluate(&[5.0, 2.0]).unwrap(), 32.0);
    let bad = ModelArtifact::new(
        Task::Regression,
        1,
        vec![Transform::StandardScaler { mean: vec![0.0], scale: vec![0.0] }],
        ModelBody::Linear(Linear { weights: vec![1.0], bias: 0.0 }),
    );
    assert!(matches!(bad, Err(ModelError::Invalid { path, .. }) if path == "transforms[0].scale[0]"));
}

#[test]
fn classification_argmax_ties_to_lowest() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    assert_eq!(argmax(&[2.0, 2.0]), 0);
    let tree = Tree { nodes: vec![Node::Leaf { leaf: vec![0.5, 0.5, 0.1] }] };
    let body = TreeEnsemble { outputs: 3, combine: Combine::Sum, base_score: 0.0, trees: vec![tree] };
    let m = ModelArtifact::new(Task::Classification, 1, vec![], ModelBody::TreeEnsemble(body)).unwrap();
    assert_eq!(m.predict(&[0.0]).unwrap().class(), Some(0));
}

#[test]
fn arity_and_finiteness_checks() {
    let m = linear(vec![1.0, 2.0], 0.0);
    assert_eq!(m.predict(&[1.0]), Err(ModelError::Arity { expected: 2, got: 1 }));
    assert_eq!(m.predict(&[1.0, f64::INFINITY]), Err(ModelError::NonFiniteInput { index: 1 }));
}

#[test]
fn batch_edge_cases() {
    let m = stump();
    assert!(m.predict_batch(&Matrix::zeros(0, 3), Execution::Parallel).unwrap().is_empty());
    let rows = Matrix::from_rows(&[vec![0.9, 0.0, 0.0], vec![0.9, 0.0, 0.0], vec![0.9, 0.0, 0.0]]);
    let out = m.predict_batch(&rows, Execution::Parallel).unwrap();
    assert!(out.iter().all(|p| *p == out[0]));
}

#[test]
fn canonical_round_trip() {
    let m = stump();
    let text = m.to_json();
    let back = ModelArtifact::from_json(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_json(), text);
}

proptest! {
    #[test]
    fn softmax_argmax_equals_raw_argmax(scores in prop::collection::vec(-20.0f64..20.0, 2..8)) {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        let soft: Vec<f64> = exp.iter().map(|e| e / total).collect();
        prop_assert_eq!(argmax(&soft), argmax(&scores));
    }

    #[test]
    fn predict_is_pure(x in prop::collection::vec(-5.0f64..5.0, 3)) {
        let m = stump();
        prop_assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
    }
}
