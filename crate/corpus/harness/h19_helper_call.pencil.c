int square(int v)
{
  return v * v;
}

void squares(int n, int A[const restrict static n], int B[const restrict static n])
{
  for (int i = 0; i < n; i++)
    B[i] = square(A[i]) - i;
}
