"""Mixed multiple orthogonal polynomials under matrix-polynomial Christoffel perturbations."""
