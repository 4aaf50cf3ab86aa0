void matvec(int n, int M[const restrict static n][n], int x[const restrict static n], int y[const restrict static n])
{
  for (int i = 0; i < n; i++) {
    y[i] = 0;
    for (int j = 0; j < n; j++)
      y[i] += M[i][j] * x[j];
  }
}
