void outer(int n, int x[const restrict static n], int y[const restrict static n], int M[const restrict static n][n])
{
  for (int i = 0; i < n; i++)
    for (int j = 0; j < n; j++)
      M[i][j] = x[i] * y[j] - i + j;
}
