"""2D cluster-assumption experiments on a signed distance map."""
