void lower_sum(int n, int M[const restrict static n][n], int r[const restrict static n])
{
  for (int i = 0; i < n; i++) {
    r[i] = 0;
    for (int j = 0; j <= i; j++)
      r[i] += M[i][j];
  }
}
